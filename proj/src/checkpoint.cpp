#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace rmas {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require(pos + n <= buf.size(), ErrorKind::format, "checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_descriptor(std::string& out, const BuildConfig& b) {
  put_i32(out, static_cast<int>(b.pattern));
  put_i32(out, b.n);
  put_i32(out, b.m);
  put_i32(out, b.d_h);
  put_i32(out, b.layers);
  put_i32(out, b.heads);
  put_i32(out, b.vocab);
  put_i32(out, b.max_pos);
  put_i32(out, b.d_mid);
  put_i32(out, static_cast<int>(b.inner_kind));
  put_i32(out, static_cast<int>(b.outer_kind));
  put_i32(out, b.expert_scale);
  put_u64(out, b.seed);
}

BuildConfig read_descriptor(Reader& r) {
  BuildConfig b;
  int pattern = r.i32();
  require(pattern >= 0 && pattern <= static_cast<int>(Pattern::self_loop),
          ErrorKind::format, "checkpoint names an unknown pattern");
  b.pattern = static_cast<Pattern>(pattern);
  b.n = r.i32();
  b.m = r.i32();
  b.d_h = r.i32();
  b.layers = r.i32();
  b.heads = r.i32();
  b.vocab = r.i32();
  b.max_pos = r.i32();
  b.d_mid = r.i32();
  int inner = r.i32(), outer = r.i32();
  require(inner >= 0 && inner <= static_cast<int>(LinkKind::variant_2layer) &&
              outer >= 0 && outer <= static_cast<int>(LinkKind::variant_2layer),
          ErrorKind::format, "checkpoint names an unknown link kind");
  b.inner_kind = static_cast<LinkKind>(inner);
  b.outer_kind = static_cast<LinkKind>(outer);
  b.expert_scale = r.i32();
  b.seed = r.u64();
  return b;
}

}  // namespace

void save_checkpoint(SystemSpec& s, const BuildConfig& built,
                     const std::string& path) {
  std::vector<NamedParam> params = enumerate_params(s);
  std::map<std::string, int> names;
  for (const NamedParam& p : params)
    require(names.emplace(p.name, 1).second, ErrorKind::config,
            "duplicate parameter name '" + p.name + "'");

  std::string out = "RMAS";
  put_u32(out, checkpoint_version);
  put_descriptor(out, built);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  std::uint64_t offset = 0;
  for (const NamedParam& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    out.push_back(0);  // kind tag: dense f32
    put_i32(out, p.tensor->rows());
    put_i32(out, p.tensor->cols());
    put_u64(out, offset);
    offset += static_cast<std::uint64_t>(p.tensor->numel()) * 4;
  }
  for (const NamedParam& p : params)
    for (double v : p.tensor->data) put_f32(out, static_cast<float>(v));
  put_u64(out, fnv1a64(out.data(), out.size()));

  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(os.good(), ErrorKind::io, "write failed for '" + path + "'");
}

LoadedSystem load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  require(buf.size() >= 16, ErrorKind::format, "checkpoint truncated");

  require(buf.compare(0, 4, "RMAS") == 0, ErrorKind::format,
          "bad magic: not a checkpoint file");
  Reader tail{buf, buf.size() - 8};
  std::uint64_t stored = tail.u64();
  require(stored == fnv1a64(buf.data(), buf.size() - 8), ErrorKind::format,
          "checksum mismatch: checkpoint is corrupt");

  Reader r{buf, 4};
  std::uint32_t version = r.u32();
  require(version == checkpoint_version, ErrorKind::format,
          "unsupported checkpoint version " + std::to_string(version) +
              " (expected " + std::to_string(checkpoint_version) + ")");

  LoadedSystem loaded;
  loaded.built = read_descriptor(r);
  loaded.system = build_system(loaded.built);

  struct Entry {
    int rows = 0, cols = 0;
    std::uint64_t offset = 0;
  };
  std::uint32_t count = r.u32();
  std::map<std::string, Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = r.u32();
    std::string name = r.bytes(len);
    std::uint8_t kind = r.u8();
    require(kind == 0, ErrorKind::format, "unknown manifest kind tag");
    Entry e;
    e.rows = r.i32();
    e.cols = r.i32();
    e.offset = r.u64();
    require(manifest.emplace(name, e).second, ErrorKind::format,
            "duplicate manifest entry '" + name + "'");
  }

  const std::size_t payload_start = r.pos;
  require(buf.size() >= payload_start + 8, ErrorKind::format, "checkpoint truncated");
  const std::uint64_t payload_len = buf.size() - 8 - payload_start;

  std::vector<NamedParam> params = enumerate_params(loaded.system);
  require(params.size() == manifest.size(), ErrorKind::format,
          "checkpoint carries " + std::to_string(manifest.size()) +
              " parameters, system expects " + std::to_string(params.size()));
  for (NamedParam& p : params) {
    auto it = manifest.find(p.name);
    require(it != manifest.end(), ErrorKind::format,
            "checkpoint is missing parameter '" + p.name + "'");
    const Entry& e = it->second;
    require(e.rows == p.tensor->rows() && e.cols == p.tensor->cols(),
            ErrorKind::format, "shape mismatch for parameter '" + p.name + "'");
    std::uint64_t bytes = static_cast<std::uint64_t>(p.tensor->numel()) * 4;
    require(e.offset + bytes <= payload_len, ErrorKind::format,
            "payload overrun for parameter '" + p.name + "'");
    Reader pr{buf, payload_start + e.offset};
    for (double& v : p.tensor->data) v = static_cast<double>(pr.f32());
  }
  return loaded;
}

}  // namespace rmas
