#include "ditcache/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "ditcache/errors.hpp"

namespace ditcache {

using ad::Tensor;

SyntheticDataset::SyntheticDataset(int image_size, int channels, int n_classes, uint64_t seed)
    : image_size_(image_size), channels_(channels), n_classes_(n_classes), rng_(seed) {
    if (image_size < 4 || channels < 1 || n_classes < 1)
        throw ConfigError("dataset: need image_size >= 4, channels >= 1, n_classes >= 1");
}

std::vector<double> SyntheticDataset::render(int class_id) {
    const int H = image_size_, W = image_size_;
    std::vector<double> img(static_cast<size_t>(channels_) * H * W, -0.8);

    const double cx = W / 2.0 - 0.5 + rng_.uniform(-1.0, 1.0);
    const double cy = H / 2.0 - 0.5 + rng_.uniform(-1.0, 1.0);
    const double amp = rng_.uniform(0.7, 1.0);
    const int pattern = class_id % 4;
    const double sign = (class_id / 4) % 2 == 0 ? 1.0 : -1.0;

    for (int c = 0; c < channels_; c++)
        for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++) {
                double v;
                switch (pattern) {
                    case 0: {  // filled disk
                        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                        v = d2 <= (W / 3.0) * (W / 3.0) ? amp : -amp;
                        break;
                    }
                    case 1:  // vertical stripes
                        v = (x / 2) % 2 == 0 ? amp : -amp;
                        break;
                    case 2:  // diagonal gradient
                        v = amp * (2.0 * (x + y) / (W + H - 2) - 1.0);
                        break;
                    default: {  // axis-aligned cross
                        bool on = std::fabs(x - cx) < 1.2 || std::fabs(y - cy) < 1.2;
                        v = on ? amp : -amp;
                        break;
                    }
                }
                img[(static_cast<size_t>(c) * H + y) * W + x] = std::clamp(sign * v, -1.0, 1.0);
            }
    return img;
}

SyntheticDataset::Sample SyntheticDataset::next() {
    int cls = rng_.uniform_int(n_classes_);
    return {Tensor::from({1, channels_, image_size_, image_size_}, render(cls)), cls};
}

std::pair<Tensor, int> SyntheticDataset::next_batch(int batch) {
    // one class per batch: the model conditions on a single class id per call
    int cls = rng_.uniform_int(n_classes_);
    std::vector<double> data;
    data.reserve(static_cast<size_t>(batch) * channels_ * image_size_ * image_size_);
    for (int b = 0; b < batch; b++) {
        auto img = render(cls);
        data.insert(data.end(), img.begin(), img.end());
    }
    return {Tensor::from({batch, channels_, image_size_, image_size_}, std::move(data)), cls};
}

}  // namespace ditcache
