#include "latentforge/store.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace latentforge {

namespace {

constexpr std::array<char, 4> kEmb1Magic{'E', 'M', 'B', '1'};
constexpr std::array<char, 4> kCkptMagic{'L', 'F', 'C', 'K'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  static_assert(std::is_unsigned_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) throw DataError("truncated payload");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void put_matrix(std::ostream& out, const MatrixF& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le(out, std::bit_cast<std::uint32_t>(m(r, c)));
}

MatrixF get_matrix(std::istream& in, std::uint32_t rows, std::uint32_t cols) {
  MatrixF m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return m;
}

bool bit_equal(const MatrixF& a, const MatrixF& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

bool StoreEntry::operator==(const StoreEntry& other) const {
  if (id != other.id || !bit_equal(embedding, other.embedding)) return false;
  if (logits.has_value() != other.logits.has_value()) return false;
  return !logits || bit_equal(*logits, *other.logits);
}

void EmbeddingStore::add(std::string id, MatrixF embedding, std::optional<MatrixF> logits) {
  if (index_.count(id)) throw DataError(fmt::format("duplicate store id '{}'", id));
  if (id.size() > 0xFFFF) throw DataError("store id longer than 65535 bytes");
  if (embedding.rows() < 1 || embedding.cols() < 1) throw DataError(fmt::format("entry '{}' has an empty embedding", id));
  if (!embedding.allFinite()) throw DataError(fmt::format("entry '{}' has non-finite embedding values", id));
  if (entries_.empty()) {
    d_model_ = static_cast<int>(embedding.cols());
    has_logits_ = logits.has_value();
    vocab_ = logits ? static_cast<int>(logits->cols()) : 0;
  } else {
    if (embedding.cols() != d_model_)
      throw DataError(fmt::format("entry '{}' has d_model {} (store has {})", id, embedding.cols(), d_model_));
    if (logits.has_value() != has_logits_) throw DataError("logits must be present for all entries or none");
    if (logits && logits->cols() != vocab_)
      throw DataError(fmt::format("entry '{}' has vocabulary {} (store has {})", id, logits->cols(), vocab_));
  }
  if (logits) {
    if (logits->rows() != embedding.rows())
      throw DataError(fmt::format("entry '{}': logits rows differ from embedding rows", id));
    if (!logits->allFinite()) throw DataError(fmt::format("entry '{}' has non-finite logits", id));
  }
  index_.emplace(id, entries_.size());
  entries_.push_back({std::move(id), std::move(embedding), std::move(logits)});
}

const StoreEntry& EmbeddingStore::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError(fmt::format("store has no entry '{}'", id));
  return entries_[it->second];
}

Matrix EmbeddingStore::stacked_rows() const {
  Eigen::Index total = 0;
  for (const auto& e : entries_) total += e.embedding.rows();
  Matrix out(total, d_model_);
  Eigen::Index row = 0;
  for (const auto& e : entries_) {
    out.middleRows(row, e.embedding.rows()) = e.embedding.cast<double>();
    row += e.embedding.rows();
  }
  return out;
}

void write_store(const EmbeddingStore& store, std::ostream& out) {
  out.write(kEmb1Magic.data(), kEmb1Magic.size());
  put_le<std::uint16_t>(out, kEmb1Version);
  put_le<std::uint16_t>(out, store.has_logits() ? 1u : 0u);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.id.size()));
    out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.embedding.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.embedding.cols()));
    put_matrix(out, e.embedding);
    if (e.logits) {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.logits->cols()));
      put_matrix(out, *e.logits);
    }
  }
  if (!out) throw DataError("I/O failure while writing EMB1 store");
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  write_store(store, out);
}

EmbeddingStore read_store(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) throw DataError("truncated payload: missing EMB1 magic");
  if (magic != kEmb1Magic)
    throw DataError(fmt::format("magic mismatch: expected EMB1, found '{}'", std::string(magic.begin(), magic.end())));
  auto version = get_le<std::uint16_t>(in);
  if (version != kEmb1Version) throw DataError(fmt::format("unsupported EMB1 version {}", version));
  auto flags = get_le<std::uint16_t>(in);
  bool logits = flags & 1u;
  auto n = get_le<std::uint32_t>(in);

  EmbeddingStore store;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto id_len = get_le<std::uint16_t>(in);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    if (in.gcount() != id_len) throw DataError("truncated payload in entry id");
    auto rows = get_le<std::uint32_t>(in);
    auto cols = get_le<std::uint32_t>(in);
    MatrixF emb = get_matrix(in, rows, cols);
    std::optional<MatrixF> lg;
    if (logits) {
      auto vocab = get_le<std::uint32_t>(in);
      lg = get_matrix(in, rows, vocab);
    }
    store.add(std::move(id), std::move(emb), std::move(lg));
  }
  return store;
}

EmbeddingStore read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return read_store(in);
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  std::string header = ckpt.header.dump();
  out.write(kCkptMagic.data(), kCkptMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_store(ckpt.tensors, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kCkptMagic) throw DataError(fmt::format("'{}' is not a checkpoint", path.string()));
  auto len = get_le<std::uint32_t>(in);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw DataError("truncated checkpoint header");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("corrupt checkpoint header: {}", e.what()));
  }
  ckpt.tensors = read_store(in);
  return ckpt;
}

void Checkpoint::add_tensor(const std::string& name, const Matrix& value) {
  MatrixF flat(value.size(), 1);
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c) flat(r * value.cols() + c, 0) = static_cast<float>(value(r, c));
  tensors.add(name, std::move(flat));
  header["tensors"][name] = {value.rows(), value.cols()};
}

Matrix Checkpoint::tensor(const std::string& name) const {
  if (!header.contains("tensors") || !header["tensors"].contains(name))
    throw DataError(fmt::format("checkpoint has no tensor '{}'", name));
  const auto shape = header["tensors"][name];
  const auto rows = shape.at(0).get<Eigen::Index>();
  const auto cols = shape.at(1).get<Eigen::Index>();
  const auto& flat = tensors.at(name).embedding;
  if (flat.rows() != rows * cols) throw DataError(fmt::format("checkpoint tensor '{}' has the wrong size", name));
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = flat(r * cols + c, 0);
  return out;
}

MatrixF to_float(const Matrix& m) { return m.cast<float>(); }
Matrix to_double(const MatrixF& m) { return m.cast<double>(); }

}  // namespace latentforge
