#include "htrkit/emissions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "htrkit/error.hpp"

namespace htrkit {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string row_label(std::size_t t) { return "row " + std::to_string(t + 1); }

}  // namespace

EmissionMatrix::EmissionMatrix(Alphabet alphabet, std::size_t timesteps,
                               std::vector<double> probs)
    : alphabet_(std::move(alphabet)), timesteps_(timesteps), probs_(std::move(probs)) {
  if (timesteps_ == 0) throw Error("emission matrix needs at least one timestep");
  const std::size_t s = classes();
  if (probs_.size() != timesteps_ * s) {
    throw Error("emission matrix has " + std::to_string(probs_.size()) +
                " entries, expected " + std::to_string(timesteps_ * s));
  }
  for (std::size_t t = 0; t < timesteps_; ++t) {
    double sum = 0.0;
    for (double p : row(t)) {
      if (!std::isfinite(p)) throw Error(row_label(t) + ": non-finite entry");
      if (p < 0.0) throw Error(row_label(t) + ": negative entry");
      if (p > 1.0 + kRowSumTolerance) throw Error(row_label(t) + ": entry above 1");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(row_label(t) + " not normalized (sum " + format_double(sum) + ")");
    }
  }
}

EmissionMatrix read_emissions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("malformed header: empty input");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed header: ") + e.what());
  }
  std::size_t timesteps = 0;
  std::size_t classes = 0;
  std::vector<std::string> symbols;
  try {
    if (!header.is_object() || header.value("format", "") != "emit-v1") {
      throw Error("malformed header: format is not emit-v1");
    }
    timesteps = header.at("timesteps").get<std::size_t>();
    classes = header.at("classes").get<std::size_t>();
    symbols = header.at("alphabet").get<std::vector<std::string>>();
    if (header.at("blank_index").get<long>() != 0) {
      throw Error("malformed header: blank_index must be 0");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed header: ") + e.what());
  }
  if (symbols.size() != classes) {
    throw Error("header declares " + std::to_string(classes) + " classes but alphabet lists " +
                std::to_string(symbols.size()));
  }
  Alphabet alphabet = Alphabet::from_symbols(symbols);

  std::vector<double> probs;
  probs.reserve(timesteps * classes);
  for (std::size_t t = 0; t < timesteps; ++t) {
    if (!std::getline(in, line)) {
      throw Error("expected " + std::to_string(timesteps) + " rows, found " + std::to_string(t));
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* p = line.data();
    const char* end = line.data() + line.size();
    std::size_t count = 0;
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || (res.ptr != end && *res.ptr != ' ')) {
        throw Error(row_label(t) + ": non-numeric entry");
      }
      probs.push_back(v);
      ++count;
      p = res.ptr;
    }
    if (count != classes) {
      throw Error(row_label(t) + " has " + std::to_string(count) + " entries, expected " +
                  std::to_string(classes));
    }
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \r\t") != std::string::npos) {
      throw Error("trailing data after " + std::to_string(timesteps) + " rows");
    }
  }
  return EmissionMatrix(std::move(alphabet), timesteps, std::move(probs));
}

void write_emissions(const EmissionMatrix& m, std::ostream& out) {
  nlohmann::json header = {{"format", "emit-v1"},
                           {"timesteps", m.timesteps()},
                           {"classes", m.classes()},
                           {"alphabet", m.alphabet().symbols()},
                           {"blank_index", 0}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < m.timesteps(); ++t) {
    const auto row = m.row(t);
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (s != 0) out << ' ';
      out << format_double(row[s]);
    }
    out << '\n';
  }
}

EmissionMatrix load_emissions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_emissions(in);
}

void save_emissions(const EmissionMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_emissions(m, out);
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

EmissionMatrix softmax_rows(Alphabet alphabet, std::size_t timesteps,
                            std::span<const double> logits) {
  const std::size_t s = alphabet.size();
  if (logits.size() != timesteps * s) {
    throw Error("logit grid has " + std::to_string(logits.size()) + " entries, expected " +
                std::to_string(timesteps * s));
  }
  std::vector<double> probs(logits.size());
  for (std::size_t t = 0; t < timesteps; ++t) {
    const auto row = logits.subspan(t * s, s);
    if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
      throw Error(row_label(t) + ": non-finite logit");
    }
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < s; ++k) {
      probs[t * s + k] = std::exp(row[k] - mx);
      sum += probs[t * s + k];
    }
    for (std::size_t k = 0; k < s; ++k) probs[t * s + k] /= sum;
  }
  return EmissionMatrix(std::move(alphabet), timesteps, std::move(probs));
}

EmissionMatrix softmax_rows(Alphabet alphabet, const std::vector<std::vector<double>>& logits) {
  std::vector<double> flat;
  for (const auto& r : logits) {
    if (r.size() != alphabet.size()) throw Error("logit row has wrong arity");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  const std::size_t t = logits.size();
  return softmax_rows(std::move(alphabet), t, flat);
}

}  // namespace htrkit
