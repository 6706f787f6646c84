#include "cpl/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cpl {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw std::runtime_error("truncated file");
}

template <typename T>
void write_pod(std::ofstream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value;
  read_bytes(in, &value, sizeof(T));
  return value;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

std::string read_string(std::ifstream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0) read_bytes(in, s.data(), n);
  return s;
}

void write_matrix(std::ofstream& out, const Mat& m) {
  write_bytes(out, m.data().data(), m.data().size() * sizeof(double));
}

Mat read_matrix(std::ifstream& in, std::size_t rows, std::size_t cols) {
  Mat m(rows, cols);
  read_bytes(in, m.data().data(), m.data().size() * sizeof(double));
  return m;
}

std::ofstream open_binary_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  return out;
}

std::ifstream open_binary_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

void check_magic(std::ifstream& in, const char expect[4], const std::string& path) {
  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, expect, 4) != 0) {
    throw std::runtime_error(path + ": bad magic, expected " + std::string(expect, 4));
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw std::runtime_error(path + ": unsupported format version " + std::to_string(version));
  }
}

}  // namespace

void save_model(const EncoderModel& model, const Vocabulary& vocab, const std::string& path) {
  if (vocab.size() != model.vocab_size()) {
    throw std::invalid_argument("vocabulary size does not match embedding table");
  }
  auto out = open_binary_out(path);
  write_bytes(out, "CPLM", 4);
  write_pod<std::uint32_t>(out, kFormatVersion);
  write_pod<std::uint64_t>(out, model.vocab_size());
  write_pod<std::uint64_t>(out, model.dim());
  write_pod<std::uint32_t>(out, 0);  // flags, reserved
  write_matrix(out, model.embedding());
  write_matrix(out, model.query_proj());
  write_matrix(out, model.passage_proj());
  for (const auto& token : vocab.tokens()) write_string(out, token);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ModelBundle load_model(const std::string& path) {
  auto in = open_binary_in(path);
  check_magic(in, "CPLM", path);
  const auto v = read_pod<std::uint64_t>(in);
  const auto d = read_pod<std::uint64_t>(in);
  (void)read_pod<std::uint32_t>(in);
  Mat emb = read_matrix(in, v, d);
  Mat pq = read_matrix(in, d, d);
  Mat pp = read_matrix(in, d, d);
  std::vector<std::string> tokens;
  tokens.reserve(v);
  for (std::uint64_t i = 0; i < v; ++i) tokens.push_back(read_string(in));
  ModelBundle bundle;
  bundle.model = EncoderModel(std::move(emb), std::move(pq), std::move(pp));
  bundle.vocab = std::make_shared<Vocabulary>(std::move(tokens));
  return bundle;
}

void save_index(const RetrievalIndex& index, const std::string& path) {
  auto out = open_binary_out(path);
  write_bytes(out, "CPIX", 4);
  write_pod<std::uint32_t>(out, kFormatVersion);
  write_pod<std::uint64_t>(out, index.size());
  write_pod<std::uint64_t>(out, index.dim());
  write_pod<std::uint32_t>(out, index.clip_alpha ? 1u : 0u);
  write_pod<double>(out, index.clip_alpha.value_or(0.0));
  write_matrix(out, index.rows);
  write_bytes(out, index.norms.data(), index.norms.size() * sizeof(double));
  for (const auto& id : index.ids) write_string(out, id);
  if (!out) throw std::runtime_error("write failed: " + path);
}

RetrievalIndex load_index(const std::string& path) {
  auto in = open_binary_in(path);
  check_magic(in, "CPIX", path);
  const auto rows = read_pod<std::uint64_t>(in);
  const auto d = read_pod<std::uint64_t>(in);
  const auto flags = read_pod<std::uint32_t>(in);
  const double alpha = read_pod<double>(in);
  RetrievalIndex index;
  index.rows = read_matrix(in, rows, d);
  index.norms.resize(rows);
  read_bytes(in, index.norms.data(), rows * sizeof(double));
  index.ids.reserve(rows);
  for (std::uint64_t i = 0; i < rows; ++i) index.ids.push_back(read_string(in));
  if (flags & 1u) index.clip_alpha = alpha;
  return index;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t file_digest(const std::string& path) {
  auto in = open_binary_in(path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace cpl
