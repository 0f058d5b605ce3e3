#include "dwcaps/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dwcaps/rng.hpp"

namespace dwcaps {

namespace fs = std::filesystem;

template <class T>
Tensor<T> DatasetBundle::image(std::int64_t index) const {
  Tensor<T> out({height, width, 3});
  const std::uint8_t* src = pixels.data() + index * out.size();
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(src[i]) / T(255);
  return out;
}

template <class T>
Tensor<T> DatasetBundle::batch(const std::vector<std::int64_t>& indices) const {
  if (indices.empty()) throw ContractError("batch: empty index list");
  Tensor<T> out({static_cast<std::int64_t>(indices.size()), height, width, 3});
  const std::int64_t per_item = height * width * 3;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::uint8_t* src = pixels.data() + indices[b] * per_item;
    T* dst = out.data() + static_cast<std::int64_t>(b) * per_item;
    for (std::int64_t i = 0; i < per_item; ++i)
      dst[i] = static_cast<T>(src[i]) / T(255);
  }
  return out;
}

std::vector<int> DatasetBundle::labels_for(
    const std::vector<std::int64_t>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::int64_t i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32(const std::string& buf, std::size_t& at,
                      const std::string& file) {
  if (at + 4 > buf.size()) throw FormatError(file + ": truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at++]))
         << (8 * i);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("short write to " + path);
}

std::vector<std::string> default_class_names(std::int64_t n) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  char buf[24];
  for (std::int64_t c = 0; c < n; ++c) {
    std::snprintf(buf, sizeof(buf), "class%02lld", static_cast<long long>(c));
    names.emplace_back(buf);
  }
  return names;
}

DatasetBundle load_raw_idx(const std::string& prefix) {
  const std::string images_path = prefix + ".images";
  const std::string labels_path = prefix + ".labels";
  const std::string img = read_file(images_path);
  std::size_t at = 0;
  if (img.size() < 4 || img.compare(0, 4, "DWCI") != 0) {
    throw FormatError(images_path + ": bad magic");
  }
  at = 4;
  DatasetBundle bundle;
  const std::uint32_t count = get_u32(img, at, images_path);
  bundle.height = get_u32(img, at, images_path);
  bundle.width = get_u32(img, at, images_path);
  const std::uint32_t channels = get_u32(img, at, images_path);
  if (channels != 3) {
    throw FormatError(images_path + ": expected 3 channels, got " +
                      std::to_string(channels));
  }
  const std::size_t payload =
      static_cast<std::size_t>(count) * bundle.height * bundle.width * 3;
  if (img.size() != at + payload) {
    throw FormatError(images_path + ": truncated pixel payload");
  }
  bundle.pixels.assign(img.begin() + static_cast<std::ptrdiff_t>(at), img.end());

  const std::string lab = read_file(labels_path);
  if (lab.size() < 4 || lab.compare(0, 4, "DWCL") != 0) {
    throw FormatError(labels_path + ": bad magic");
  }
  at = 4;
  const std::uint32_t lcount = get_u32(lab, at, labels_path);
  const std::uint32_t classes = get_u32(lab, at, labels_path);
  if (lcount != count) {
    throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                      " != image count " + std::to_string(count));
  }
  if (lab.size() != at + lcount) {
    throw FormatError(labels_path + ": truncated label payload");
  }
  bundle.labels.reserve(lcount);
  for (std::uint32_t i = 0; i < lcount; ++i) {
    const int label = static_cast<unsigned char>(lab[at + i]);
    if (label >= static_cast<int>(classes)) {
      throw FormatError(labels_path + ": label " + std::to_string(label) +
                        " out of range");
    }
    bundle.labels.push_back(label);
  }
  bundle.class_names = default_class_names(classes);
  return bundle;
}

std::vector<std::uint8_t> load_ppm(const std::string& path, std::int64_t& h,
                                   std::int64_t& w) {
  const std::string data = read_file(path);
  std::size_t at = 0;
  auto skip_space = [&] {
    while (at < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[at]))) {
        ++at;
      } else if (data[at] == '#') {  // comment line
        while (at < data.size() && data[at] != '\n') ++at;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::int64_t {
    skip_space();
    std::int64_t v = 0;
    bool any = false;
    while (at < data.size() && std::isdigit(static_cast<unsigned char>(data[at]))) {
      v = v * 10 + (data[at++] - '0');
      any = true;
    }
    if (!any) throw FormatError(path + ": malformed PPM header");
    return v;
  };
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6') {
    throw FormatError(path + ": not a binary PPM (P6) file");
  }
  at = 2;
  w = read_int();
  h = read_int();
  const std::int64_t maxval = read_int();
  if (maxval != 255) throw FormatError(path + ": PPM maxval must be 255");
  ++at;  // single whitespace after maxval
  const std::size_t payload = static_cast<std::size_t>(h * w * 3);
  if (data.size() < at + payload) throw FormatError(path + ": truncated PPM");
  return {data.begin() + static_cast<std::ptrdiff_t>(at),
          data.begin() + static_cast<std::ptrdiff_t>(at + payload)};
}

DatasetBundle load_image_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw DatasetError(dir + " is not a directory");
  }
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw DatasetError(dir + ": no class subdirectories");
  }
  DatasetBundle bundle;
  bundle.class_names = class_dirs;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / class_dirs[c])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw DatasetError(dir + "/" + class_dirs[c] + ": empty class directory");
    }
    for (const auto& file : files) {
      std::int64_t h = 0, w = 0;
      auto rgb = load_ppm(file, h, w);
      if (bundle.count() == 0) {
        bundle.height = h;
        bundle.width = w;
      } else if (h != bundle.height || w != bundle.width) {
        throw DatasetError(file + ": image size " + std::to_string(w) + "x" +
                           std::to_string(h) + " differs from " +
                           std::to_string(bundle.width) + "x" +
                           std::to_string(bundle.height));
      }
      bundle.pixels.insert(bundle.pixels.end(), rgb.begin(), rgb.end());
      bundle.labels.push_back(static_cast<int>(c));
    }
  }
  return bundle;
}

}  // namespace

DatasetBundle load_dataset(const std::string& path, const std::string& format) {
  if (format == "raw-idx") return load_raw_idx(path);
  if (format == "image-dir") return load_image_dir(path);
  throw FormatError("unknown dataset format \"" + format +
                    "\" (expected raw-idx or image-dir)");
}

void save_raw_idx(const DatasetBundle& bundle, const std::string& prefix) {
  std::string img = "DWCI";
  put_u32(img, static_cast<std::uint32_t>(bundle.count()));
  put_u32(img, static_cast<std::uint32_t>(bundle.height));
  put_u32(img, static_cast<std::uint32_t>(bundle.width));
  put_u32(img, 3);
  img.append(reinterpret_cast<const char*>(bundle.pixels.data()),
             bundle.pixels.size());
  write_file(prefix + ".images", img);

  std::string lab = "DWCL";
  put_u32(lab, static_cast<std::uint32_t>(bundle.count()));
  put_u32(lab, static_cast<std::uint32_t>(bundle.num_classes()));
  for (int label : bundle.labels) lab += static_cast<char>(label);
  write_file(prefix + ".labels", lab);
}

void save_ppm(const std::string& path, const std::uint8_t* rgb,
              std::int64_t height, std::int64_t width) {
  std::string data = "P6\n" + std::to_string(width) + " " +
                     std::to_string(height) + "\n255\n";
  data.append(reinterpret_cast<const char*>(rgb),
              static_cast<std::size_t>(height * width * 3));
  write_file(path, data);
}

namespace {

// One oriented bar through a jittered center, over uniform background
// noise. The geometry is identical in all three channels so color carries
// no class signal.
void draw_item(std::uint8_t* dst, std::int64_t size, std::int64_t label,
               std::int64_t num_classes, Rng& rng) {
  const double angle = M_PI * static_cast<double>(label) /
                       static_cast<double>(num_classes);
  const double jitter = static_cast<double>(size) / 6.0;
  const double cx = size / 2.0 + rng.uniform(-jitter, jitter);
  const double cy = size / 2.0 + rng.uniform(-jitter, jitter);
  const double thickness = static_cast<double>(size) / 10.0;
  const double half_len = static_cast<double>(size) * 0.45;
  const double amp = rng.uniform(0.75, 1.0);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double px = x - cx, py = y - cy;
      const double along = px * dx + py * dy;
      const double across = std::abs(-px * dy + py * dx);
      double v = rng.uniform(0.0, 0.2);
      if (across < thickness && std::abs(along) < half_len) {
        v = amp * (1.0 - 0.5 * across / thickness);
      }
      const auto q = static_cast<std::uint8_t>(
          std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      std::uint8_t* px_out = dst + (y * size + x) * 3;
      px_out[0] = px_out[1] = px_out[2] = q;
    }
  }
}

DatasetBundle generate_with_counts(const std::vector<std::int64_t>& per_class,
                                   std::int64_t size, std::uint64_t seed) {
  if (size != 32 && size != 64) {
    throw DomainError("generate_synthetic: size must be 32 or 64");
  }
  const auto num_classes = static_cast<std::int64_t>(per_class.size());
  DatasetBundle bundle;
  bundle.height = size;
  bundle.width = size;
  bundle.class_names = default_class_names(num_classes);
  Rng rng(mix_seed(seed, 17));
  for (std::int64_t c = 0; c < num_classes; ++c) {
    for (std::int64_t i = 0; i < per_class[static_cast<std::size_t>(c)]; ++i) {
      const std::size_t offset = bundle.pixels.size();
      bundle.pixels.resize(offset + static_cast<std::size_t>(size * size * 3));
      draw_item(bundle.pixels.data() + offset, size, c, num_classes, rng);
      bundle.labels.push_back(static_cast<int>(c));
    }
  }
  return bundle;
}

}  // namespace

DatasetBundle generate_synthetic(std::int64_t num_classes,
                                 std::int64_t per_class, std::int64_t size,
                                 std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1) {
    throw DomainError("generate_synthetic: counts must be >= 1");
  }
  return generate_with_counts(
      std::vector<std::int64_t>(static_cast<std::size_t>(num_classes),
                                per_class),
      size, seed);
}

DatasetBundle generate_synthetic_total(std::int64_t num_classes,
                                       std::int64_t total, std::int64_t size,
                                       std::uint64_t seed) {
  if (num_classes < 1 || total < num_classes) {
    throw DomainError("generate_synthetic_total: need at least one item per class");
  }
  std::vector<std::int64_t> per_class(static_cast<std::size_t>(num_classes),
                                      total / num_classes);
  for (std::int64_t c = 0; c < total % num_classes; ++c)
    ++per_class[static_cast<std::size_t>(c)];
  return generate_with_counts(per_class, size, seed);
}

DatasetBundle split(DatasetBundle bundle, double ratio,
                    double subsample_fraction, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw DomainError("split: ratio must be in (0,1)");
  }
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw DomainError("split: subsample_fraction must be in (0,1]");
  }
  bundle.train_indices.clear();
  bundle.test_indices.clear();
  std::vector<std::vector<std::int64_t>> by_class(
      static_cast<std::size_t>(bundle.num_classes()));
  for (std::int64_t i = 0; i < bundle.count(); ++i) {
    by_class[static_cast<std::size_t>(bundle.labels[static_cast<std::size_t>(i)])]
        .push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& items = by_class[c];
    Rng rng(mix_seed(seed, 100 + c));
    rng.shuffle(items);
    const auto kept = static_cast<std::int64_t>(std::llround(
        static_cast<double>(items.size()) * subsample_fraction));
    if (kept < 2) {
      throw DatasetError("split: class " + bundle.class_names[c] + " has " +
                         std::to_string(kept) + " items after subsampling");
    }
    auto n_train = static_cast<std::int64_t>(
        std::llround(static_cast<double>(kept) * ratio));
    n_train = std::clamp<std::int64_t>(n_train, 1, kept - 1);
    for (std::int64_t i = 0; i < kept; ++i) {
      (i < n_train ? bundle.train_indices : bundle.test_indices)
          .push_back(items[static_cast<std::size_t>(i)]);
    }
  }
  return bundle;
}

template Tensor<float> DatasetBundle::image<float>(std::int64_t) const;
template Tensor<double> DatasetBundle::image<double>(std::int64_t) const;
template Tensor<float> DatasetBundle::batch<float>(
    const std::vector<std::int64_t>&) const;
template Tensor<double> DatasetBundle::batch<double>(
    const std::vector<std::int64_t>&) const;

}  // namespace dwcaps
