#ifndef CVC_IO_HPP
#define CVC_IO_HPP

#include <string>
#include <vector>

#include "cvc/tensor.hpp"

namespace cvc {

// 8-bit binary PPM (P6). Values are mapped linearly to [0,1] on read and
// rounded on write.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& frame);

// Sequence ingestion. A directory is scanned for numbered .ppm files (the
// trailing integer before the extension orders them; gaps are an error). A
// .yuv file is raw planar 8-bit YUV420 with a sidecar '<file>.desc' holding
// 'width = W' and 'height = H'; frames are converted to RGB with the
// BT.601 limited-range matrix:
//   R = 1.164 (Y-16) + 1.596 (Cr-128)
//   G = 1.164 (Y-16) - 0.813 (Cr-128) - 0.391 (Cb-128)
//   B = 1.164 (Y-16) + 2.018 (Cb-128)
// and chroma is replicated 2x2.
std::vector<Tensor> load_sequence(const std::string& path, int max_frames = -1);

std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<uint8_t>& bytes);

// Line-delimited JSON event log.
class JsonlWriter {
 public:
  JsonlWriter() = default;
  explicit JsonlWriter(const std::string& path);
  void write_line(const std::string& json);
  bool open() const { return !path_.empty(); }

 private:
  std::string path_;
};

// Minimal SVG polyline chart for RD curves and loss traces.
struct PlotSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
};
void write_svg_plot(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series);

}  // namespace cvc

#endif
