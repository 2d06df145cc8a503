#pragma once

#include "latentforge/core.hpp"

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace latentforge::data {

// Canonical residue ordering used for one-hot columns and logit columns.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr int kVocab = 20;

bool is_residue(char aa);

/// Column of `aa` in kAlphabet. Throws DataError for anything outside the
/// 20 canonical residues.
int residue_index(char aa);

char residue_at(int index);

struct Mutation {
  int position = 0;  // 0-based
  char from = 'A';
  char to = 'A';

  auto operator<=>(const Mutation&) const = default;
};

struct DmsRecord {
  std::string sequence;
  std::vector<Mutation> mutations;
  double fitness = 0.0;

  int mutation_count() const { return static_cast<int>(mutations.size()); }
};

struct DmsDataset {
  std::string wildtype;
  std::vector<DmsRecord> records;
  double wildtype_fitness = 0.0;

  std::size_t size() const { return records.size(); }

  /// Sorted, distinct positions touched by at least one record.
  std::vector<int> mutated_positions() const;

  /// Checks every record/dataset invariant; throws DataError on the first
  /// violation.
  void validate() const;
};

/// Parses one mutant token such as `A23T` or `A23T:G45S` (1-based positions)
/// against `wildtype`. `WT` yields an empty list. The result is ordered by position.
std::vector<Mutation> parse_mutant(std::string_view token, std::string_view wildtype);

/// Inverse of parse_mutant; the empty list formats as `WT`.
std::string format_mutant(const std::vector<Mutation>& mutations);

std::string apply_mutations(std::string_view wildtype, const std::vector<Mutation>& mutations);

/// Substitutions that turn `wildtype` into `sequence`, ordered by position.
std::vector<Mutation> diff_mutations(std::string_view wildtype, std::string_view sequence);

/// Parses a ProteinGym-style CSV with at least the columns
/// `mutant,sequence,DMS_score`. The `sequence` column may be empty, in which
/// case it is derived from the mutant token.
DmsDataset parse_dms(std::string_view csv_text, std::string_view wildtype);

std::string write_dms_csv(const DmsDataset& ds);

/// L x 20 indicator matrix over kAlphabet.
Matrix one_hot(std::string_view sequence);

}  // namespace latentforge::data
