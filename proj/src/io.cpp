#include "cvc/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace cvc {

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError(path + ": not a binary PPM (P6) file");
  auto next_int = [&]() {
    int v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v)) throw DataError(path + ": malformed PPM header");
      return v;
    }
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw DataError(path + ": only maxval 255 supported");
  in.get();  // single whitespace after header
  std::vector<unsigned char> raw(size_t(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!in) throw DataError(path + ": truncated pixel data");
  Tensor frame(Shape{1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        frame.at(0, c, y, x) = raw[size_t((y * w + x) * 3 + c)] / 255.0;
  return frame;
}

void write_ppm(const std::string& path, const Tensor& frame) {
  const Shape s = frame.shape;
  check_contract(s.n == 1 && s.c == 3, "write_ppm: frame must be (1,3,H,W)");
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw DataError("cannot write image: " + path);
  out << "P6\n" << s.w << " " << s.h << "\n255\n";
  std::vector<unsigned char> raw(size_t(s.w) * s.h * 3);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(frame.at(0, c, y, x), 0.0, 1.0);
        raw[size_t((y * s.w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
}

namespace {

std::vector<Tensor> load_yuv(const std::string& path, int max_frames) {
  const std::string desc_path = path + ".desc";
  std::ifstream desc(desc_path);
  if (!desc.good())
    throw DataError("missing sidecar descriptor " + desc_path + " (expected 'width = W' and 'height = H')");
  int w = 0, h = 0;
  std::string line;
  while (std::getline(desc, line)) {
    std::istringstream ls(line);
    std::string key, eq;
    int value;
    if (ls >> key >> eq >> value) {
      if (key == "width") w = value;
      if (key == "height") h = value;
    }
  }
  if (w <= 0 || h <= 0) throw DataError(desc_path + ": missing width/height");
  if (w % 2 || h % 2) throw DataError(path + ": YUV420 dims must be even");

  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open sequence: " + path);
  in.seekg(0, std::ios::end);
  const int64_t size = in.tellg();
  in.seekg(0);
  const int64_t frame_bytes = int64_t(w) * h * 3 / 2;
  if (size % frame_bytes)
    throw DataError(path + ": file size " + std::to_string(size) +
                    " is not a multiple of the YUV420 frame size " + std::to_string(frame_bytes));
  int64_t count = size / frame_bytes;
  if (max_frames > 0) count = std::min<int64_t>(count, max_frames);

  std::vector<Tensor> frames;
  std::vector<unsigned char> buf(size_t(frame_bytes), 0);
  for (int64_t f = 0; f < count; ++f) {
    in.read(reinterpret_cast<char*>(buf.data()), frame_bytes);
    if (!in) throw DataError(path + ": truncated frame " + std::to_string(f));
    Tensor frame(Shape{1, 3, h, w});
    const unsigned char* yp = buf.data();
    const unsigned char* up = yp + int64_t(w) * h;
    const unsigned char* vp = up + int64_t(w) * h / 4;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double Y = 1.164 * (double(yp[y * w + x]) - 16.0);
        const double Cb = double(up[(y / 2) * (w / 2) + x / 2]) - 128.0;
        const double Cr = double(vp[(y / 2) * (w / 2) + x / 2]) - 128.0;
        frame.at(0, 0, y, x) = std::clamp((Y + 1.596 * Cr) / 255.0, 0.0, 1.0);
        frame.at(0, 1, y, x) = std::clamp((Y - 0.813 * Cr - 0.391 * Cb) / 255.0, 0.0, 1.0);
        frame.at(0, 2, y, x) = std::clamp((Y + 2.018 * Cb) / 255.0, 0.0, 1.0);
      }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace

std::vector<Tensor> load_sequence(const std::string& path, int max_frames) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".yuv") return load_yuv(path, max_frames);
  if (!fs::is_directory(path)) throw DataError(path + ": not a directory or .yuv file");

  std::map<int, std::string> indexed;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() < 5 || name.substr(name.size() - 4) != ".ppm") continue;
    int end = int(name.size()) - 4, start = end;
    while (start > 0 && std::isdigit(static_cast<unsigned char>(name[size_t(start - 1)]))) --start;
    if (start == end) throw DataError(path + ": file " + name + " carries no frame index");
    indexed[std::stoi(name.substr(size_t(start), size_t(end - start)))] = entry.path().string();
  }
  if (indexed.empty()) throw DataError(path + ": no numbered .ppm files found");

  std::vector<Tensor> frames;
  int expect = indexed.begin()->first;
  for (const auto& [idx, file] : indexed) {
    if (idx != expect)
      throw DataError(path + ": missing frame index " + std::to_string(expect) +
                      " (found " + std::to_string(idx) + " next)");
    Tensor frame = read_ppm(file);
    if (!frames.empty() && !(frame.shape == frames.front().shape))
      throw DataError(file + ": frame dims changed mid-sequence");
    frames.push_back(std::move(frame));
    ++expect;
    if (max_frames > 0 && int(frames.size()) >= max_frames) break;
  }
  return frames;
}

std::vector<uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_binary_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw DataError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

JsonlWriter::JsonlWriter(const std::string& path) : path_(path) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out.good()) throw DataError("cannot open log for writing: " + path_);
}

void JsonlWriter::write_line(const std::string& json) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << json << "\n";
}

void write_svg_plot(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series) {
  const int W = 640, H = 480, ML = 70, MR = 20, MT = 40, MB = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

  std::ofstream out(path);
  if (!out.good()) throw DataError("cannot write plot: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << px(xv) << "' y='" << H - MB + 18 << "' text-anchor='middle' font-size='11'>"
        << xv << "</text>\n";
    out << "<text x='" << ML - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end' font-size='11'>"
        << yv << "</text>\n";
  }
  out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 10
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  out << "<text x='18' y='" << (MT + H - MB) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 " << (MT + H - MB) / 2
      << ")'>" << y_label << "</text>\n";
  int li = 0;
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    out << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='3' fill='" << s.color
          << "'/>\n";
    out << "<text x='" << W - MR - 5 << "' y='" << MT + 16 * li << "' text-anchor='end' fill='"
        << s.color << "' font-size='12'>" << s.label << "</text>\n";
    ++li;
  }
  out << "</svg>\n";
}

}  // namespace cvc
