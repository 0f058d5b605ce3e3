#include "dwcaps/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace dwcaps {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_i64(std::string& buf, std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf += static_cast<char>((u >> (8 * i)) & 0xff);
}

void put_string(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf += s;
}

struct Reader {
  const std::string& buf;
  std::size_t at = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (at + n > buf.size()) {
      throw CheckpointError(path + ": truncated checkpoint");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at++]))
           << (8 * i);
    return v;
  }
  std::int64_t i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at++]))
           << (8 * i);
    return static_cast<std::int64_t>(v);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  }
};

template <class T>
std::string encode(const ModelGraph<T>& model) {
  std::string buf = "DWCP";
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(sizeof(T)));
  put_string(buf, model.variant().name());
  const auto& caps = model.capsules();
  put_i64(buf, caps.primary_capsule_dim);
  put_i64(buf, caps.class_capsule_dim);
  put_i64(buf, caps.num_classes);
  put_i64(buf, caps.routing_iterations);
  const auto params = model.parameters();
  put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, var] : params) {
    put_string(buf, name);
    const auto& t = var.value();
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::int64_t d : t.shape()) put_i64(buf, d);
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(T);
    const std::size_t offset = buf.size();
    buf.resize(offset + bytes);
    std::memcpy(buf.data() + offset, t.data(), bytes);
  }
  return buf;
}

std::string read_and_verify(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 8 || data.compare(0, 4, "DWCP") != 0) {
    throw CheckpointError(path + ": not a checkpoint file");
  }
  const std::size_t payload = data.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(
                  static_cast<unsigned char>(data[payload + i]))
              << (8 * i);
  const auto computed = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(data.data()),
            static_cast<uInt>(payload)));
  if (stored != computed) {
    throw CheckpointError(path + ": checksum mismatch");
  }
  data.resize(payload);
  return data;
}

struct Header {
  std::string variant;
  CapsuleConfig caps;
  std::uint32_t scalar_width = 0;
  std::uint32_t param_count = 0;
};

Header read_header(Reader& r) {
  r.at = 4;  // past magic
  Header h;
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointError(r.path + ": unsupported format version " +
                          std::to_string(version));
  }
  h.scalar_width = r.u32();
  h.variant = r.str();
  h.caps.primary_capsule_dim = r.i64();
  h.caps.class_capsule_dim = r.i64();
  h.caps.num_classes = r.i64();
  h.caps.routing_iterations = static_cast<int>(r.i64());
  h.param_count = r.u32();
  return h;
}

template <class T>
void read_tensors_into(ModelGraph<T>& model, Reader& r, const Header& header) {
  if (header.scalar_width != sizeof(T)) {
    throw CheckpointError(r.path + ": checkpoint stores " +
                          std::to_string(header.scalar_width * 8) +
                          "-bit scalars, expected " +
                          std::to_string(sizeof(T) * 8) + "-bit");
  }
  auto params = model.parameters();
  if (params.size() != header.param_count) {
    throw CheckpointError(r.path + ": tensor count mismatch");
  }
  for (auto& [name, var] : params) {
    const std::string stored_name = r.str();
    if (stored_name != name) {
      throw CheckpointError(r.path + ": tensor \"" + stored_name +
                            "\" where \"" + name + "\" was expected");
    }
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.i64());
    Tensor<T>& dst = var.mutable_value();
    if (shape != dst.shape()) {
      throw CheckpointError(r.path + ": tensor \"" + name + "\" has shape " +
                            shape_to_string(shape) + ", model expects " +
                            shape_to_string(dst.shape()));
    }
    const std::size_t bytes = static_cast<std::size_t>(dst.size()) * sizeof(T);
    r.need(bytes);
    std::memcpy(dst.data(), r.buf.data() + r.at, bytes);
    r.at += bytes;
  }
  if (r.at != r.buf.size()) {
    throw CheckpointError(r.path + ": trailing bytes after tensors");
  }
}

}  // namespace

template <class T>
std::uint32_t save_checkpoint(const ModelGraph<T>& model,
                              const std::string& path) {
  std::string buf = encode(model);
  const auto checksum = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  put_u32(buf, checksum);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("short write to " + path);
  return checksum;
}

CheckpointInfo checkpoint_info(const std::string& path) {
  const std::string data = read_and_verify(path);
  Reader r{data, 0, path};
  const Header h = read_header(r);
  return {h.variant, h.caps, static_cast<int>(h.scalar_width)};
}

template <class T>
ModelGraph<T> load_checkpoint(const std::string& path) {
  const std::string data = read_and_verify(path);
  Reader r{data, 0, path};
  const Header h = read_header(r);
  auto model = ModelGraph<T>::build(ArchitectureVariant::parse(h.variant),
                                    h.caps, 0);
  read_tensors_into(model, r, h);
  return model;
}

template <class T>
void restore_weights(ModelGraph<T>& model, const std::string& path) {
  const std::string data = read_and_verify(path);
  Reader r{data, 0, path};
  const Header h = read_header(r);
  if (h.variant != model.variant().name()) {
    throw ContractError(path + ": checkpoint is for variant " + h.variant +
                        ", model was built as " + model.variant().name());
  }
  read_tensors_into(model, r, h);
}

#define DWCAPS_INSTANTIATE(T)                                             \
  template std::uint32_t save_checkpoint<T>(const ModelGraph<T>&,         \
                                            const std::string&);          \
  template ModelGraph<T> load_checkpoint<T>(const std::string&);          \
  template void restore_weights<T>(ModelGraph<T>&, const std::string&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
