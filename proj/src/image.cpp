#include "gsicp/image.hpp"

#include "gsicp/errors.hpp"

namespace gsicp {

Image downsampleImage(const Image& in, int factor, bool skip_zero) {
  if (factor < 1) throw InputError("downsample factor must be >= 1");
  if (factor == 1) return in;
  Image out(in.width / factor, in.height / factor, in.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        double sum = 0.0;
        int n = 0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            const double v = in.at(x * factor + dx, y * factor + dy, c);
            if (skip_zero && !(v > 0.0)) continue;
            sum += v;
            ++n;
          }
        }
        out.at(x, y, c) = n > 0 ? sum / n : 0.0;
      }
    }
  }
  return out;
}

}  // namespace gsicp
