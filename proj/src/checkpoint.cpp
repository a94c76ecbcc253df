#include "uigroup/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "uigroup/synthgen.hpp"  // read_file / write_file

namespace uigroup {

namespace {

constexpr char kMagic[4] = {'E', 'G', 'F', 'E'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

struct Reader {
  const unsigned char* p;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw IntegrityError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t size) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
  out += ckpt.config_json;

  for (const auto& [name, tensor] : ckpt.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (std::int64_t dim : tensor.shape()) put_u64(out, static_cast<std::uint64_t>(dim));
    for (float v : tensor.value()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }

  const std::uint32_t crc =
      crc32_ieee(reinterpret_cast<const unsigned char*>(out.data()), out.size());
  put_u32(out, crc);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 4 + 4) throw IntegrityError("checkpoint too small");

  // CRC first: no partial parsing of damaged files.
  const std::size_t body = bytes.size() - 4;
  const unsigned char* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(raw[body + static_cast<std::size_t>(i)]) << (8 * i);
  if (crc32_ieee(raw, body) != stored) throw IntegrityError("checkpoint CRC mismatch");

  Reader r{raw, body};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw CheckpointFormatError("bad checkpoint magic");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kVersion)
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.config_json = r.bytes(r.u32());

  while (r.pos < r.size) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IntegrityError("implausible tensor rank");
    Shape shape;
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t dim = r.u64();
      if (dim > (1ull << 32)) throw IntegrityError("implausible tensor dimension");
      shape.push_back(static_cast<std::int64_t>(dim));
      numel *= static_cast<std::int64_t>(dim);
    }
    r.need(static_cast<std::size_t>(numel) * 4);
    std::vector<float> values(static_cast<std::size_t>(numel));
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    ckpt.params.emplace_back(name, TensorF::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace uigroup
