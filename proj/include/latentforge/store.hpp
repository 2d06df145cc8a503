#pragma once

#include "latentforge/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace latentforge {

struct StoreEntry {
  std::string id;
  MatrixF embedding;              // L x d_model
  std::optional<MatrixF> logits;  // L x V

  bool operator==(const StoreEntry& other) const;
};

// Id -> embedding (and optionally logits) collection backed by the EMB1 file
// format. Either every entry carries logits or none does.
class EmbeddingStore {
 public:
  void add(std::string id, MatrixF embedding, std::optional<MatrixF> logits = std::nullopt);

  const StoreEntry& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool has_logits() const { return has_logits_; }
  int d_model() const { return d_model_; }
  int vocab_size() const { return vocab_; }

  const std::vector<StoreEntry>& entries() const { return entries_; }

  /// All embedding rows of all entries stacked in insertion order.
  Matrix stacked_rows() const;

  bool operator==(const EmbeddingStore& other) const { return entries_ == other.entries_; }

 private:
  std::vector<StoreEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  int d_model_ = 0;
  int vocab_ = 0;
  bool has_logits_ = false;
};

// EMB1 (little-endian):
//   magic "EMB1" | u16 version=1 | u16 flags (bit0: logits) | u32 n_entries
//   per entry: u16 id_len | id bytes | u32 L | u32 d | L*d f32 row-major
//              [if logits: u32 V | L*V f32]
inline constexpr std::uint16_t kEmb1Version = 1;

void write_store(const EmbeddingStore& store, std::ostream& out);
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore read_store(std::istream& in);
EmbeddingStore read_store(const std::filesystem::path& path);

// Checkpoint container shared by SAE, probe, and MLP checkpoints:
//   magic "LFCK" | u32 header_len | JSON header bytes | EMB1 payload
// Each parameter tensor is one EMB1 entry keyed by its name.
// Tensors are flattened row-major into n x 1 entries; their shapes live in
// header["tensors"].
struct Checkpoint {
  nlohmann::json header;
  EmbeddingStore tensors;

  void add_tensor(const std::string& name, const Matrix& value);
  Matrix tensor(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

MatrixF to_float(const Matrix& m);
Matrix to_double(const MatrixF& m);

}  // namespace latentforge
