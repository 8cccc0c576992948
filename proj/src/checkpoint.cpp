#include "gid/checkpoint.hpp"

#include "gid/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>

namespace gid::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * 4);
    std::memcpy(dst, bytes_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::string encode(const Checkpoint& ckpt) {
  if (ckpt.magic.size() != 4) throw FormatError("checkpoint magic must be 4 bytes");
  std::string out = ckpt.magic;
  put_u32(out, kCheckpointVersion);
  put_str(out, ckpt.config.serialize());
  put_u32(out, static_cast<std::uint32_t>(ckpt.sections.size()));
  for (const auto& s : ckpt.sections) {
    put_str(out, s.name);
    put_u32(out, static_cast<std::uint32_t>(s.shape.size()));
    std::size_t count = 1;
    for (auto d : s.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= d;
    }
    if (count != s.data.size()) throw FormatError("section " + s.name + " data does not match its shape");
    out.append(reinterpret_cast<const char*>(s.data.data()), s.data.size() * 4);
  }
  put_u32(out, crc_of(out, out.size()));
  return out;
}

Checkpoint decode(const std::string& bytes, const std::string& expected_magic) {
  if (bytes.size() < 12) throw FormatError("checkpoint too short");
  if (bytes.compare(0, 4, expected_magic) != 0) {
    throw FormatError("bad checkpoint magic '" + bytes.substr(0, 4) + "', expected " + expected_magic);
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes, body)) throw FormatError("checkpoint CRC32 mismatch");

  Reader r(bytes, body);
  Checkpoint ckpt;
  ckpt.magic = r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ckpt.config = KeyValueText::parse(r.str(r.u32()));
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Section s;
    s.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      s.shape.push_back(r.u32());
      count *= s.shape.back();
    }
    r.need(count * 4);
    s.data.resize(count);
    r.floats(s.data.data(), count);
    ckpt.sections.push_back(std::move(s));
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

void save(const std::string& path, const Checkpoint& ckpt) { write_file(path, encode(ckpt)); }

Checkpoint load(const std::string& path, const std::string& expected_magic) {
  return decode(read_file(path), expected_magic);
}

template <typename T>
std::vector<Section> pack(const nn::ParameterStore<T>& store) {
  std::vector<Section> out;
  for (const auto* p : store.all()) {
    Section s;
    s.name = p->name;
    s.shape = p->value.shape();
    s.data.reserve(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) s.data.push_back(static_cast<float>(p->value[i]));
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
void unpack(const std::vector<Section>& sections, nn::ParameterStore<T>& store) {
  const auto params = store.all();
  if (params.size() != sections.size()) {
    throw FormatError("checkpoint has " + std::to_string(sections.size()) + " sections, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Section& s = sections[i];
    nn::Parameter<T>& p = *params[i];
    if (s.name != p.name || s.shape != p.value.shape()) {
      throw FormatError("checkpoint section " + s.name + " " + nn::to_string(s.shape) + " does not match model " +
                        p.name + " " + nn::to_string(p.value.shape()));
    }
    for (std::size_t k = 0; k < s.data.size(); ++k) p.value[k] = static_cast<T>(s.data[k]);
  }
}

void set_meta(KeyValueText& kv, const std::string& key, const std::string& value) {
  kv.set("meta." + key, value);
}

std::string get_meta(const KeyValueText& kv, const std::string& key, const std::string& fallback) {
  return kv.get_string("meta." + key, fallback);
}

template std::vector<Section> pack(const nn::ParameterStore<float>&);
template std::vector<Section> pack(const nn::ParameterStore<double>&);
template void unpack(const std::vector<Section>&, nn::ParameterStore<float>&);
template void unpack(const std::vector<Section>&, nn::ParameterStore<double>&);

}  // namespace gid::io
