#include "htrkit/decode_job.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

#include "htrkit/error.hpp"
#include "htrkit/parallel.hpp"

namespace htrkit {

namespace fs = std::filesystem;

DecodeSummary decode_directory(const fs::path& emissions_dir, const DecodeParams& params,
                               DecodeMode mode, const fs::path& out_dir, std::size_t workers) {
  params.validate();
  if (!fs::is_directory(emissions_dir)) throw Error(emissions_dir.string() + " is not a directory");
  fs::create_directories(out_dir);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(emissions_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".emit") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  struct Outcome {
    std::optional<Alphabet> alphabet;
    std::optional<DecodeResult> result;
    std::string error;
  };
  std::vector<Outcome> outcomes(files.size());

  parallel_for(files.size(), workers, [&](std::size_t i) {
    Outcome& o = outcomes[i];
    try {
      const EmissionMatrix m = load_emissions(files[i]);
      o.alphabet = m.alphabet();
      o.result = mode == DecodeMode::kGreedy ? greedy_decode(m) : prefix_beam_search(m, params, 1).front();
    } catch (const Error& e) {
      o.error = e.what();
    }
  });

  // The reference alphabet comes from the first readable file in name order.
  const Alphabet* reference = nullptr;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Outcome& o = outcomes[i];
    if (!o.result) continue;
    if (reference == nullptr) {
      reference = &*o.alphabet;
    } else if (!(*o.alphabet == *reference)) {
      o.error = "alphabet differs from the other emission files";
      o.result.reset();
      continue;
    }
    const fs::path target = out_dir / (files[i].stem().string() + ".txt");
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out << o.result->transcript << '\n';
    out.flush();
    if (!out) {
      o.error = "cannot write " + target.string();
      o.result.reset();
    }
  }

  DecodeSummary summary;
  double sum = 0.0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (outcomes[i].result) {
      ++summary.files;
      sum += outcomes[i].result->score_q;
    } else {
      summary.failures.push_back({files[i].filename().string(), outcomes[i].error});
    }
  }
  if (summary.files != 0) summary.mean_score = sum / static_cast<double>(summary.files);
  return summary;
}

std::string summary_json(const DecodeSummary& summary) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : summary.failures) failures.push_back({{"file", f.file}, {"error", f.error}});
  nlohmann::json j = {{"files", summary.files}, {"failures", failures}, {"mean_score", summary.mean_score}};
  return j.dump(2);
}

}  // namespace htrkit
