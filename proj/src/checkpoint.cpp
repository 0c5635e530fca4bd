#include "ssnt/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "ssnt/errors.hpp"

namespace ssnt {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'N', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ssnt:
      return "ssnt";
    case ModelKind::lm:
      return "lm";
  }
  return "unknown";
}

std::vector<std::uint8_t> serialize_parameters(ModelKind kind, const ParameterSet& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(kind));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) put_f64(out, v);
  }
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

void deserialize_parameters(const std::vector<std::uint8_t>& bytes, ModelKind kind,
                            ParameterSet& params) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  if (bytes.size() < 20) throw FormatError("checkpoint is truncated");
  const std::size_t body = bytes.size() - 4;
  {
    Reader tail(bytes, bytes.size());
    tail.str(body);
    const std::uint32_t stored = tail.u32();
    if (stored != crc32_of(bytes.data(), body)) {
      throw FormatError("checkpoint CRC mismatch (corrupt or truncated file)");
    }
  }
  Reader in(bytes, body);
  in.str(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t stored_kind = in.u32();
  if (stored_kind != static_cast<std::uint32_t>(kind)) {
    const std::string found = stored_kind == 1 || stored_kind == 2
                                  ? to_string(static_cast<ModelKind>(stored_kind))
                                  : "kind " + std::to_string(stored_kind);
    throw FormatError("checkpoint holds a " + found + " model, expected " + to_string(kind));
  }
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  // Decode everything before touching the model.
  std::vector<Vec> values(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const Parameter& p = params.at(k);
    const std::string name = in.str(in.u32());
    if (name != p.name) {
      throw FormatError("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    }
    const std::uint32_t rank = in.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = in.u32();
    if (shape != p.value.shape()) throw FormatError("shape mismatch for parameter '" + name + "'");
    values[k].resize(p.value.size());
    for (double& v : values[k]) v = in.f64();
  }
  if (!in.done()) throw FormatError("trailing bytes in checkpoint");
  for (std::uint32_t k = 0; k < count; ++k) {
    auto dst = params.at(k).value.data();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void write_file_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + tmp);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw InputError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

void save_checkpoint(const std::string& path, ModelKind kind, const ParameterSet& params) {
  const auto bytes = serialize_parameters(kind, params);
  write_file_atomically(path, std::string(bytes.begin(), bytes.end()));
}

void load_checkpoint(const std::string& path, ModelKind kind, ParameterSet& params) {
  deserialize_parameters(read_file_bytes(path), kind, params);
}

}  // namespace ssnt
