#include "mtdm/cache.hpp"

#include <openssl/sha.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mtdm {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'D', 'M', 'D', 'A', 'T', 'A'};

template <class T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "cache writer assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end, std::string source)
      : bytes_(bytes), end_(end), source_(std::move(source)) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > end_) throw DataError(source_ + ": truncated cache file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string sha256_hex(const std::string& bytes, std::array<unsigned char, SHA256_DIGEST_LENGTH>* raw = nullptr) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest.data());
  if (raw) *raw = digest;
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 0xF]);
  }
  return out;
}

void encode_graph(std::string& out, const TemporalGraph& g) {
  put<std::uint64_t>(out, g.size());
  for (const Snapshot& s : g.snapshots()) {
    put<std::int64_t>(out, s.t);
    put<std::uint64_t>(out, s.facts.size());
    for (const Fact& f : s.facts) {
      put<std::int64_t>(out, f.s);
      put<std::int64_t>(out, f.r);
      put<std::int64_t>(out, f.o);
    }
  }
}

TemporalGraph decode_graph(Reader& in, std::size_t num_entities, std::size_t num_relations,
                           const std::string& source) {
  const auto count = in.get<std::uint64_t>();
  std::vector<Fact> facts;
  std::int64_t prev = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto t = in.get<std::int64_t>();
    if (i > 0 && t <= prev) throw DataError(source + ": snapshot timestamps are not increasing");
    prev = t;
    const auto n = in.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) {
      Fact f;
      f.s = in.get<std::int64_t>();
      f.r = in.get<std::int64_t>();
      f.o = in.get<std::int64_t>();
      f.t = t;
      facts.push_back(f);
    }
  }
  try {
    return build_snapshots(facts, num_entities, num_relations, true);
  } catch (const std::out_of_range& e) {
    throw DataError(source + ": " + e.what());
  }
}

}  // namespace

std::string encode_prepared(const PreparedData& data) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCacheVersion);
  put<std::uint64_t>(out, data.num_entities);
  put<std::uint64_t>(out, data.num_relations);
  for (const TemporalGraph* g : {&data.train, &data.valid, &data.test}) encode_graph(out, *g);
  return out;
}

std::string content_hash(const PreparedData& data) { return sha256_hex(encode_prepared(data)); }

std::string write_cache(const PreparedData& data, const std::filesystem::path& path) {
  std::string body = encode_prepared(data);
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  const std::string hash = sha256_hex(body, &digest);
  body.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(body.data(), std::streamsize(body.size()));
  if (!out) throw DataError("failed writing " + path.string());
  return hash;
}

PreparedData read_cache(const std::filesystem::path& path, std::string* hash_out) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cache " + source);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + SHA256_DIGEST_LENGTH || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(source + ": not an MTDM dataset cache");
  }
  const std::size_t body_size = bytes.size() - SHA256_DIGEST_LENGTH;
  const std::string body = bytes.substr(0, body_size);
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  const std::string hash = sha256_hex(body, &digest);
  if (std::memcmp(digest.data(), bytes.data() + body_size, digest.size()) != 0) {
    throw DataError(source + ": content hash mismatch (file is corrupt or was modified)");
  }

  Reader r(body, body.size(), source);
  r.skip(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCacheVersion) {
    throw DataError(source + ": cache version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCacheVersion) + "); rerun preprocess");
  }
  PreparedData data;
  data.num_entities = r.get<std::uint64_t>();
  data.num_relations = r.get<std::uint64_t>();
  data.train = decode_graph(r, data.num_entities, data.num_relations, source);
  data.valid = decode_graph(r, data.num_entities, data.num_relations, source);
  data.test = decode_graph(r, data.num_entities, data.num_relations, source);
  if (r.pos() != body.size()) throw DataError(source + ": trailing bytes in cache");
  if (hash_out) *hash_out = hash;
  return data;
}

PreparedData load_prepared(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(path)) return read_cache(path);
  if (!fs::is_directory(path)) throw DataError("dataset path " + path.string() + " does not exist");
  if (fs::is_regular_file(path / kCacheFileName)) return read_cache(path / kCacheFileName);
  return prepare(parse_dataset(path));
}

namespace {

bool same_graph(const TemporalGraph& a, const TemporalGraph& b) {
  if (a.size() != b.size() || a.num_entities() != b.num_entities() || a.num_relations() != b.num_relations() ||
      a.inverse_augmented() != b.inverse_augmented()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].t != b[i].t || a[i].facts != b[i].facts) return false;
  }
  return true;
}

}  // namespace

bool operator==(const PreparedData& a, const PreparedData& b) {
  return a.num_entities == b.num_entities && a.num_relations == b.num_relations && same_graph(a.train, b.train) &&
         same_graph(a.valid, b.valid) && same_graph(a.test, b.test);
}

}  // namespace mtdm
