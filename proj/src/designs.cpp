#include "latentforge/designs.hpp"

#include "latentforge/core.hpp"
#include "latentforge/data.hpp"

#include <fmt/format.h>

#include <charconv>
#include <string>

namespace latentforge {

std::string designs_csv(const std::vector<DesignCandidate>& designs, std::string_view wildtype) {
  std::string out = "sequence,mutations,source_latent,multiplier,predicted_fitness\n";
  for (const auto& d : designs) {
    out += fmt::format("{},{},{},{},{}\n", d.sequence, data::format_mutant(data::diff_mutations(wildtype, d.sequence)),
                       d.source_latent, d.multiplier, d.predicted_fitness);
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, int line_no) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw DataError(fmt::format("designs line {}: cannot parse number '{}'", line_no, text));
  return value;
}

}  // namespace

std::vector<DesignCandidate> parse_designs_csv(std::string_view text, std::string_view wildtype) {
  std::vector<DesignCandidate> out;
  bool header_seen = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    if (!header_seen) {
      if (fields.size() < 5 || fields[0] != "sequence")
        throw DataError("designs CSV must start with a sequence,mutations,source_latent,multiplier,predicted_fitness header");
      header_seen = true;
      continue;
    }
    if (fields.size() != 5) throw DataError(fmt::format("designs line {}: expected 5 fields", line_no));
    DesignCandidate d;
    d.sequence = std::string(fields[0]);
    if (d.sequence.size() != wildtype.size())
      throw DataError(fmt::format("designs line {}: sequence length differs from the wildtype", line_no));
    d.mutation_count = static_cast<int>(data::diff_mutations(wildtype, d.sequence).size());
    d.source_latent = parse_number<int>(fields[2], line_no);
    d.multiplier = parse_number<double>(fields[3], line_no);
    d.predicted_fitness = parse_number<double>(fields[4], line_no);
    out.push_back(std::move(d));
  }
  if (!header_seen) throw DataError("designs CSV is empty");
  return out;
}

}  // namespace latentforge
