#include "cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "htrkit/ctc.hpp"
#include "htrkit/dataprep.hpp"
#include "htrkit/decode_job.hpp"
#include "htrkit/error.hpp"
#include "htrkit/metrics.hpp"
#include "htrkit/ngram.hpp"

namespace htrkit::cli {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

struct Options {
  // prepare
  std::string coco, images, translations, out;
  double orient_threshold = kDefaultOrientThreshold;
  bool keep_orientation = false;
  bool clockwise = false;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::vector<double> fractions{kDefaultSplitFractions.begin(), kDefaultSplitFractions.end()};
  // stats
  std::string texts, oov_eval;
  bool json = false;
  // lm
  std::string corpus, lm_a, lm_b, lm, text;
  int order = 6;
  double unk_floor = kDefaultUnkFloor;
  double lambda = 0.5;
  // decode
  std::string emissions, mode = "beam";
  double alpha = 0.8;
  double beta = 2.0;
  std::size_t beam_width = 100;
  // eval
  std::string pred, ref, label = "Model";
};

int do_prepare(const Options& o, std::ostream& out, std::ostream& err) {
  if (std::abs(o.fractions[0] + o.fractions[1] + o.fractions[2] - 1.0) > 1e-9) {
    err << "error: --fractions must sum to 1\n";
    return kUsageError;
  }
  const CocoAnnotations coco = parse_annotations(fs::path(o.coco));
  const auto pages = assemble_pages(coco, o.images, o.translations);
  ExportOptions eo;
  eo.orient = !o.keep_orientation;
  eo.orient_threshold = o.orient_threshold;
  eo.rotation = o.clockwise ? Rotation::kClockwise : Rotation::kCounterClockwise;
  eo.workers = o.workers;
  std::vector<std::string> warnings;
  const Manifest manifest = export_pairs(pages, coco.by_image, o.out, eo, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  for (const auto& f : manifest.failures) {
    err << "failed: " << f.document << '_' << f.page << " line " << f.line << ": " << f.reason << '\n';
  }
  const fs::path dir(o.out);
  save_manifest(manifest, dir / "manifest.json");
  if (manifest.pairs.size() >= 3) {
    const auto parts = split_dataset(manifest.pairs, o.seed, {o.fractions[0], o.fractions[1], o.fractions[2]});
    const char* names[3] = {"train.json", "val.json", "test.json"};
    for (std::size_t i = 0; i < 3; ++i) save_manifest(Manifest{parts[i], {}}, dir / names[i]);
  } else {
    err << "warning: fewer than 3 pairs; no train/val/test split written\n";
  }
  out << "pairs " << manifest.pairs.size() << " failures " << manifest.failures.size() << '\n';
  return manifest.failures.empty() ? kOk : kPartialFailure;
}

int do_stats(const Options& o, std::ostream& out, std::ostream&) {
  const DatasetStats s = dataset_stats(o.texts);
  std::optional<VocabReport> oov;
  if (!o.oov_eval.empty()) oov = oov_report(read_corpus(o.texts), read_corpus(o.oov_eval));
  if (o.json) {
    auto j = nlohmann::json::parse(stats_json(s));
    if (oov) {
      j["oov"] = {{"vocab_size", oov->vocab_size}, {"oov_tokens", oov->oov_tokens},
                  {"total_tokens", oov->total_tokens}, {"oov_rate", oov->oov_rate}};
    }
    out << j.dump(2) << '\n';
    return kOk;
  }
  out << "lines\t" << s.line_count << "\nsymbols\t" << s.symbol_count << "\nwords\t" << s.word_count << '\n';
  for (const auto& [c, n] : s.char_histogram) out << "char\t" << (c == " " ? "<space>" : c) << '\t' << n << '\n';
  if (oov) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", oov->oov_rate);
    out << "oov_rate\t" << buf << "\t(" << oov->oov_tokens << '/' << oov->total_tokens << ")\n";
  }
  return kOk;
}

int do_lm_train(const Options& o, std::ostream& out, std::ostream&) {
  const auto corpus = read_corpus(o.corpus);
  const NGramModel model = train(corpus, {o.order, o.unk_floor});
  write_arpa(model, fs::path(o.out));
  out << "trained order-" << o.order << " model on " << corpus.size() << " lines\n";
  return kOk;
}

int do_lm_interpolate(const Options& o, std::ostream& out, std::ostream&) {
  const NGramModel a = read_arpa(fs::path(o.lm_a));
  const NGramModel b = read_arpa(fs::path(o.lm_b));
  write_arpa(interpolate(a, b, o.lambda), fs::path(o.out));
  out << "interpolated with lambda " << format_double(o.lambda) << '\n';
  return kOk;
}

int do_lm_score(const Options& o, std::ostream& out, std::ostream&) {
  const NGramModel model = read_arpa(fs::path(o.lm));
  const auto lines = read_lines(o.text);
  double total = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& line : lines) {
    const double lp = model.sequence_logprob(line);
    total += lp;
    if (o.json) {
      rows.push_back({{"text", line}, {"log10prob", lp}});
    } else {
      out << format_double(lp) << '\t' << line << '\n';
    }
  }
  if (o.json) {
    out << nlohmann::json({{"lines", rows}, {"total_log10prob", total}}).dump(2) << '\n';
  } else {
    out << "total\t" << format_double(total) << '\n';
  }
  return kOk;
}

int do_decode(const Options& o, std::ostream& out, std::ostream& err) {
  DecodeParams params;
  params.beam_width = o.beam_width;
  params.alpha = o.alpha;
  params.beta = o.beta;
  const DecodeMode mode = o.mode == "greedy" ? DecodeMode::kGreedy : DecodeMode::kBeam;
  std::optional<NGramModel> lm;
  if (!o.lm.empty()) {
    if (mode == DecodeMode::kGreedy) {
      err << "warning: --lm is ignored in greedy mode\n";
    } else {
      lm = read_arpa(fs::path(o.lm));
      params.lm = &*lm;
    }
  }
  const DecodeSummary summary = decode_directory(o.emissions, params, mode, o.out, o.workers);
  for (const auto& f : summary.failures) err << "failed: " << f.file << ": " << f.error << '\n';
  out << summary_json(summary) << '\n';
  return summary.ok() ? kOk : kPartialFailure;
}

int do_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const EvalReport r = evaluate_dirs(o.pred, o.ref);
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  out << (o.json ? report_json(r) + "\n" : report_table(r, o.label));
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Decoding, language-model and evaluation toolkit for handwritten text recognition", "htrkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(0, 1);
  app.set_version_flag("--version",
                       std::string("htrkit ") + kVersion + " (emission format emit-v1, ARPA backoff n-gram)");

  auto* prepare = app.add_subcommand("prepare", "Cut annotated lines from page scans into x_y_z pairs");
  prepare->add_option("--coco", o.coco, "COCO annotation JSON")->required()->check(CLI::ExistingFile);
  prepare->add_option("--images", o.images, "Directory of page images named x_y.<ext>")->required()->check(CLI::ExistingDirectory);
  prepare->add_option("--translations", o.translations, "Directory of x_y.txt translations")->required()->check(CLI::ExistingDirectory);
  prepare->add_option("--out", o.out, "Output directory")->required();
  prepare->add_option("--orient-threshold", o.orient_threshold, "Rotate lines whose height/width exceeds this")
      ->check(CLI::PositiveNumber & CLI::Validator([](std::string& s) {
        return std::stod(s) > 1.0 ? std::string() : std::string("threshold must exceed 1");
      }, "> 1"));
  prepare->add_flag("--keep-orientation", o.keep_orientation, "Leave vertical lines unrotated");
  prepare->add_flag("--clockwise", o.clockwise, "Rotate clockwise instead of counterclockwise");
  prepare->add_option("--workers", o.workers, "Parallel workers")->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
  prepare->add_option("--seed", o.seed, "Shuffle seed for the train/val/test split");
  prepare->add_option("--fractions", o.fractions, "train,val,test fractions")
      ->delimiter(',')->expected(3)->check(CLI::Range(0.0, 1.0));

  auto* stats = app.add_subcommand("stats", "Character and word statistics of a transcript directory");
  stats->add_option("--texts", o.texts, "Directory of .txt transcripts")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--oov-eval", o.oov_eval, "Held-out .txt directory; reports word OOV rate against --texts")
      ->check(CLI::ExistingDirectory);
  stats->add_flag("--json", o.json, "Emit JSON");

  auto* lm_train = app.add_subcommand("lm-train", "Train a Witten-Bell character n-gram model");
  lm_train->add_option("--corpus", o.corpus, "Directory of .txt training files")->required()->check(CLI::ExistingDirectory);
  lm_train->add_option("--order", o.order, "n-gram order")->check(CLI::Range(1, kMaxOrder));
  lm_train->add_option("--unk-floor", o.unk_floor, "Probability reserved for <unk>")
      ->check(CLI::Range(1e-300, 0.999999));
  lm_train->add_option("--out", o.out, "Output ARPA file")->required();

  auto* lm_interp = app.add_subcommand("lm-interpolate", "Linearly interpolate two ARPA models");
  lm_interp->add_option("--a", o.lm_a, "First ARPA model (weight lambda)")->required()->check(CLI::ExistingFile);
  lm_interp->add_option("--b", o.lm_b, "Second ARPA model (weight 1 - lambda)")->required()->check(CLI::ExistingFile);
  lm_interp->add_option("--lambda", o.lambda, "Weight of --a")->check(CLI::Range(0.0, 1.0));
  lm_interp->add_option("--out", o.out, "Output ARPA file")->required();

  auto* lm_score = app.add_subcommand("lm-score", "log10 probability of each line of a text file");
  lm_score->add_option("--lm", o.lm, "ARPA model")->required()->check(CLI::ExistingFile);
  lm_score->add_option("--text", o.text, "Text file, one sentence per line")->required()->check(CLI::ExistingFile);
  lm_score->add_flag("--json", o.json, "Emit JSON");

  auto* decode = app.add_subcommand("decode", "Decode a directory of .emit files into transcripts");
  decode->add_option("--emissions", o.emissions, "Directory of EMIT-v1 files")->required()->check(CLI::ExistingDirectory);
  decode->add_option("--out", o.out, "Transcript output directory")->required();
  decode->add_option("--mode", o.mode, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
  decode->add_option("--lm", o.lm, "ARPA character model for shallow fusion")->check(CLI::ExistingFile);
  decode->add_option("--alpha", o.alpha, "LM weight")->check(CLI::NonNegativeNumber);
  decode->add_option("--beta", o.beta, "Per-character insertion bonus");
  decode->add_option("--beam-width", o.beam_width, "Active hypotheses kept per timestep")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 30));
  decode->add_option("--workers", o.workers, "Parallel workers")->check(CLI::Range(std::size_t{1}, std::size_t{1024}));

  auto* eval = app.add_subcommand("eval", "Corpus CER / WER / ACC of predictions against references");
  eval->add_option("--pred", o.pred, "Prediction .txt directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ref", o.ref, "Reference .txt directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--label", o.label, "Row label of the table");
  eval->add_flag("--json", o.json, "Emit JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kUsageError;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kUsageError;
  }

  try {
    if (*prepare) return do_prepare(o, out, err);
    if (*stats) return do_stats(o, out, err);
    if (*lm_train) return do_lm_train(o, out, err);
    if (*lm_interp) return do_lm_interpolate(o, out, err);
    if (*lm_score) return do_lm_score(o, out, err);
    if (*decode) return do_decode(o, out, err);
    if (*eval) return do_eval(o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"htrkit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace htrkit::cli
