#include "latentforge/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_set>

namespace latentforge {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::sae_latents: return "sae_latents";
    case FeatureKind::layer_embedding: return "layer_embedding";
    case FeatureKind::logits: return "logits";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "sae_latents" || name == "sae") return FeatureKind::sae_latents;
  if (name == "layer_embedding" || name == "layer") return FeatureKind::layer_embedding;
  if (name == "logits") return FeatureKind::logits;
  throw ConfigError("unknown feature kind '" + name + "'");
}

}  // namespace latentforge

namespace latentforge::data {

namespace {

constexpr std::array<int, 256> make_index_table() {
  std::array<int, 256> table{};
  for (auto& v : table) v = -1;
  for (int i = 0; i < kVocab; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;
  return table;
}

constexpr auto kIndexTable = make_index_table();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

bool is_residue(char aa) { return kIndexTable[static_cast<unsigned char>(aa)] >= 0; }

int residue_index(char aa) {
  int idx = kIndexTable[static_cast<unsigned char>(aa)];
  if (idx < 0) throw DataError(fmt::format("unknown residue '{}'", aa));
  return idx;
}

char residue_at(int index) {
  if (index < 0 || index >= kVocab) throw DataError(fmt::format("residue index {} out of range", index));
  return kAlphabet[static_cast<std::size_t>(index)];
}

std::vector<Mutation> parse_mutant(std::string_view token, std::string_view wildtype) {
  token = trim(token);
  if (token.empty()) throw DataError("empty mutant token");
  if (token == "WT") return {};
  std::vector<Mutation> out;
  std::set<int> seen;
  for (auto part : split(token, ':')) {
    part = trim(part);
    if (part.size() < 3) throw DataError(fmt::format("malformed mutant token '{}'", token));
    char from = part.front();
    char to = part.back();
    auto digits = part.substr(1, part.size() - 2);
    int pos1 = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), pos1);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
      throw DataError(fmt::format("malformed mutant token '{}'", token));
    if (!is_residue(from) || !is_residue(to))
      throw DataError(fmt::format("malformed mutant token '{}': unknown residue", token));
    if (pos1 < 1 || static_cast<std::size_t>(pos1) > wildtype.size())
      throw DataError(fmt::format("mutant '{}': position {} outside wildtype of length {}", token, pos1,
                                  wildtype.size()));
    int pos = pos1 - 1;
    if (wildtype[static_cast<std::size_t>(pos)] != from)
      throw DataError(fmt::format("mutant '{}': from_aa mismatch at position {} (wildtype has {})", token,
                                  pos1, wildtype[static_cast<std::size_t>(pos)]));
    if (from == to) throw DataError(fmt::format("mutant '{}': from_aa equals to_aa", token));
    if (!seen.insert(pos).second)
      throw DataError(fmt::format("mutant '{}': position {} mutated twice", token, pos1));
    out.push_back({pos, from, to});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_mutant(const std::vector<Mutation>& mutations) {
  if (mutations.empty()) return "WT";
  std::string out;
  for (std::size_t i = 0; i < mutations.size(); ++i) {
    if (i) out += ':';
    out += fmt::format("{}{}{}", mutations[i].from, mutations[i].position + 1, mutations[i].to);
  }
  return out;
}

std::string apply_mutations(std::string_view wildtype, const std::vector<Mutation>& mutations) {
  std::string seq(wildtype);
  for (const auto& m : mutations) {
    if (m.position < 0 || static_cast<std::size_t>(m.position) >= seq.size())
      throw DataError(fmt::format("mutation position {} out of range", m.position));
    seq[static_cast<std::size_t>(m.position)] = m.to;
  }
  return seq;
}

std::vector<Mutation> diff_mutations(std::string_view wildtype, std::string_view sequence) {
  if (wildtype.size() != sequence.size())
    throw DataError(fmt::format("length mismatch: wildtype {} vs sequence {}", wildtype.size(), sequence.size()));
  std::vector<Mutation> out;
  for (std::size_t i = 0; i < wildtype.size(); ++i)
    if (wildtype[i] != sequence[i]) out.push_back({static_cast<int>(i), wildtype[i], sequence[i]});
  return out;
}

std::vector<int> DmsDataset::mutated_positions() const {
  std::set<int> positions;
  for (const auto& r : records)
    for (const auto& m : r.mutations) positions.insert(m.position);
  return {positions.begin(), positions.end()};
}

void DmsDataset::validate() const {
  if (wildtype.empty()) throw DataError("empty wildtype");
  for (char c : wildtype)
    if (!is_residue(c)) throw DataError(fmt::format("wildtype contains unknown residue '{}'", c));
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (r.sequence.size() != wildtype.size())
      throw DataError(fmt::format("record '{}' has length {} (wildtype {})", r.sequence, r.sequence.size(),
                                  wildtype.size()));
    for (const auto& m : r.mutations) {
      if (m.position < 0 || static_cast<std::size_t>(m.position) >= wildtype.size())
        throw DataError("mutation position out of range");
      if (wildtype[static_cast<std::size_t>(m.position)] != m.from) throw DataError("from_aa mismatch");
      if (m.from == m.to) throw DataError("from_aa equals to_aa");
    }
    if (apply_mutations(wildtype, r.mutations) != r.sequence)
      throw DataError(fmt::format("record '{}' does not match its mutations", format_mutant(r.mutations)));
    if (!std::isfinite(r.fitness)) throw DataError("non-finite fitness");
    if (!seen.insert(r.sequence).second)
      throw DataError(fmt::format("duplicate sequence for mutant '{}'", format_mutant(r.mutations)));
  }
}

DmsDataset parse_dms(std::string_view csv_text, std::string_view wildtype) {
  DmsDataset ds;
  ds.wildtype = std::string(wildtype);
  for (char c : wildtype)
    if (!is_residue(c)) throw DataError(fmt::format("wildtype contains unknown residue '{}'", c));

  auto lines = split(csv_text, '\n');
  std::size_t line_no = 0;
  while (line_no < lines.size() && (trim(lines[line_no]).empty() || trim(lines[line_no]).front() == '#'))
    ++line_no;
  if (line_no == lines.size()) throw DataError("DMS csv has no header");

  auto header = split(trim(lines[line_no]), ',');
  int col_mutant = -1, col_sequence = -1, col_score = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto name = trim(header[i]);
    if (name == "mutant") col_mutant = static_cast<int>(i);
    if (name == "sequence" || name == "mutated_sequence") col_sequence = static_cast<int>(i);
    if (name == "DMS_score") col_score = static_cast<int>(i);
  }
  if (col_mutant < 0 || col_score < 0) throw DataError("DMS csv header must contain 'mutant' and 'DMS_score'");

  std::unordered_set<std::string> seen;
  bool have_wt_row = false;
  for (++line_no; line_no < lines.size(); ++line_no) {
    auto line = trim(lines[line_no]);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw DataError(fmt::format("line {}: expected {} columns, got {}", line_no + 1, header.size(), cells.size()));

    DmsRecord rec;
    rec.mutations = parse_mutant(cells[static_cast<std::size_t>(col_mutant)], wildtype);
    rec.sequence = apply_mutations(wildtype, rec.mutations);
    if (col_sequence >= 0) {
      auto given = trim(cells[static_cast<std::size_t>(col_sequence)]);
      if (!given.empty() && given != rec.sequence)
        throw DataError(fmt::format("line {}: sequence column disagrees with mutant '{}'", line_no + 1,
                                    trim(cells[static_cast<std::size_t>(col_mutant)])));
    }
    auto score = trim(cells[static_cast<std::size_t>(col_score)]);
    std::string score_str(score);
    std::size_t consumed = 0;
    try {
      rec.fitness = std::stod(score_str, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed == 0 || consumed != score_str.size() || !std::isfinite(rec.fitness))
      throw DataError(fmt::format("line {}: non-numeric score '{}'", line_no + 1, score));
    if (!seen.insert(rec.sequence).second)
      throw DataError(fmt::format("line {}: duplicate sequence for mutant '{}'", line_no + 1,
                                  format_mutant(rec.mutations)));
    if (rec.mutations.empty()) {
      have_wt_row = true;
      ds.wildtype_fitness = rec.fitness;
    }
    ds.records.push_back(std::move(rec));
  }
  if (!have_wt_row) ds.wildtype_fitness = 0.0;
  return ds;
}

std::string write_dms_csv(const DmsDataset& ds) {
  std::string out = "mutant,sequence,DMS_score\n";
  for (const auto& r : ds.records)
    out += fmt::format("{},{},{:.17g}\n", format_mutant(r.mutations), r.sequence, r.fitness);
  return out;
}

Matrix one_hot(std::string_view sequence) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(sequence.size()), kVocab);
  for (std::size_t i = 0; i < sequence.size(); ++i) out(static_cast<Eigen::Index>(i), residue_index(sequence[i])) = 1.0;
  return out;
}

}  // namespace latentforge::data
