#include "dmtag/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmtag/analysis.hpp"
#include "dmtag/clustering.hpp"
#include "dmtag/corpus.hpp"
#include "dmtag/error.hpp"
#include "dmtag/eval.hpp"
#include "dmtag/model.hpp"

namespace dmtag {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string escape_slashes(const std::string& w) {
  std::string out;
  for (char c : w) {
    if (c == '/') out += '\\';
    out += c;
  }
  return out;
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> words;
  std::string w;
  while (is >> w) {
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words.push_back(w);
  }
  return words;
}

void add_model_flags(CLI::App* cmd, ModelConfig& cfg) {
  cmd->add_option("--window", cfg.historyWindow, "history window size");
  cmd->add_option("--beam", cfg.beamWidthDefault, "beam width");
  cmd->add_option("--min-count", cfg.minCount, "words rarer than this join !unknown");
  cmd->add_option("--min-leaf", cfg.minLeafCount, "minimum training events per leaf");
  cmd->add_option("--lambda-step", cfg.lambdaGridStep, "smoothing weight grid step");
  cmd->add_option("--heldout-frac", cfg.heldoutFraction, "fraction of dialogs held out");
}

GeneratorSpec spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::InvalidSpec, std::string("malformed spec file: ") + e.what());
  }
  GeneratorSpec s;
  try {
    for (const auto& [from, row] : j.at("transitions").items())
      for (const auto& [to, p] : row.items()) s.tagTransition[{from, to}] = p.get<double>();
    for (const auto& [tag, row] : j.at("emissions").items())
      for (const auto& [word, p] : row.items()) s.wordEmission[tag][word] = p.get<double>();
    for (const auto& [len, p] : j.at("turn_length").items())
      s.turnLength[std::stoul(len)] = p.get<double>();
    s.dialogCount = j.at("dialogs").get<std::size_t>();
    s.turnsPerDialog = j.at("turns_per_dialog").get<std::size_t>();
    s.seed = j.value("seed", 0ULL);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::InvalidSpec, std::string("bad spec field: ") + e.what());
  } catch (const std::logic_error&) {
    fail(Err::InvalidSpec, "turn_length keys must be positive integers");
  }
  return s;
}

struct CliStreams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

int dispatch(const std::vector<std::string>& args, CliStreams io) {
  CLI::App app{"joint word/POS dialog tagger with discourse-marker tags"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from an annotated corpus");
  std::string trainCorpusPath, modelOutPath;
  ModelConfig trainCfg;
  train_cmd->add_option("corpus", trainCorpusPath, "annotated corpus file")->required();
  train_cmd->add_option("-o,--out", modelOutPath, "model output path")->required();
  add_model_flags(train_cmd, trainCfg);

  // tag
  auto* tag_cmd = app.add_subcommand("tag", "tag plain text, one turn per line");
  std::string tagModelPath, tagInputPath = "-";
  std::size_t tagBeam = 0;
  tag_cmd->add_option("--model,-m", tagModelPath, "trained model file")->required();
  tag_cmd->add_option("input", tagInputPath, "text file, or - for standard input");
  tag_cmd->add_option("--beam", tagBeam, "beam width (default: model setting)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a model against a reference corpus");
  std::string evalModelPath, evalCorpusPath, evalFormat = "text";
  std::size_t evalBeam = 0;
  bool evalStrict = true;
  eval_cmd->add_option("--model,-m", evalModelPath, "trained model file")->required();
  eval_cmd->add_option("corpus", evalCorpusPath, "reference corpus file")->required();
  eval_cmd->add_option("--beam", evalBeam, "beam width (default: model setting)");
  eval_cmd->add_option("--strict-pos", evalStrict,
                       "count DM vs sentential tag confusions as POS errors");
  eval_cmd->add_option("--format", evalFormat, "text, csv, or kv");

  // crossval
  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross validation");
  std::string cvCorpusPath, cvFormat = "text";
  std::size_t cvK = 6, cvJobs = std::max(1u, std::thread::hardware_concurrency());
  long long cvFold = -1;
  bool cvStrict = true;
  ModelConfig cvCfg;
  cv_cmd->add_option("corpus", cvCorpusPath, "annotated corpus file")->required();
  cv_cmd->add_option("--k", cvK, "number of folds");
  cv_cmd->add_option("--fold", cvFold, "run a single fold (0-based)");
  cv_cmd->add_option("--jobs", cvJobs, "concurrent folds");
  cv_cmd->add_option("--strict-pos", cvStrict,
                     "count DM vs sentential tag confusions as POS errors");
  cv_cmd->add_option("--format", cvFormat, "text, csv, or kv");
  add_model_flags(cv_cmd, cvCfg);

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "compare DM tagset against collapsed tagset");
  std::string abCorpusPath, abFormat = "text";
  std::size_t abK = 6, abJobs = std::max(1u, std::thread::hardware_concurrency());
  bool abStrict = true;
  ModelConfig abCfg;
  ab_cmd->add_option("corpus", abCorpusPath, "annotated corpus file")->required();
  ab_cmd->add_option("--k", abK, "number of folds");
  ab_cmd->add_option("--jobs", abJobs, "concurrent folds");
  ab_cmd->add_option("--strict-pos", abStrict,
                     "count DM vs sentential tag confusions as POS errors");
  ab_cmd->add_option("--format", abFormat, "text, csv, or kv");
  add_model_flags(ab_cmd, abCfg);

  // cluster
  auto* cl_cmd = app.add_subcommand("cluster", "dump merge hierarchies");
  std::string clCorpusPath, clTag;
  bool clWords = false;
  std::size_t clMinCount = 2;
  cl_cmd->add_option("corpus", clCorpusPath, "annotated corpus file")->required();
  cl_cmd->add_flag("--words", clWords, "dump per-tag word hierarchies too");
  cl_cmd->add_option("--tag", clTag, "restrict word hierarchies to one tag");
  cl_cmd->add_option("--min-count", clMinCount, "words rarer than this join !unknown");

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "annotation-layer reports");
  std::string anCorpusPath, anFormat = "text", anReport = "all";
  an_cmd->add_option("corpus", anCorpusPath, "annotated corpus file")->required();
  an_cmd->add_option("--report", anReport, "turn-initial, moves, prior-acts, or all");
  an_cmd->add_option("--format", anFormat, "text, csv, or kv");

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "sample a synthetic corpus");
  std::string genPreset, genSpecPath, genOutPath;
  std::size_t genDialogs = 0, genTurns = 0;
  long long genSeed = -1;
  gen_cmd->add_option("--preset", genPreset, "built-in spec: uniform, chain, dm-contrast");
  gen_cmd->add_option("--spec", genSpecPath, "generator spec as a JSON file");
  gen_cmd->add_option("--dialogs", genDialogs, "override dialog count");
  gen_cmd->add_option("--turns", genTurns, "override turns per dialog");
  gen_cmd->add_option("--seed", genSeed, "override random seed");
  gen_cmd->add_option("-o,--out", genOutPath, "corpus output path (default: standard output)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      io.out << app.help();
      return 0;
    }
    io.err << e.what() << "\n";
    return 2;
  }

  if (train_cmd->parsed()) {
    Corpus c = parse_corpus(read_file(trainCorpusPath));
    auto [tr, ho] = split_heldout(c, trainCfg.heldoutFraction);
    TaggerModel m = train(tr, ho, trainCfg);
    save_model(m, modelOutPath);
    io.out << "model written to " << modelOutPath << " (" << m.tags.size() << " tags, "
           << m.wordCode.size() << " word entries)\n";
    return 0;
  }

  if (tag_cmd->parsed()) {
    TaggerModel m = load_model(tagModelPath);
    std::size_t beam = tagBeam ? tagBeam : m.config.beamWidthDefault;
    std::istringstream fileInput;
    std::istream* src = &io.in;
    if (tagInputPath != "-") {
      fileInput.str(read_file(tagInputPath));
      src = &fileInput;
    }
    std::vector<HistoryItem> history;
    std::string line;
    while (std::getline(*src, line)) {
      std::vector<std::string> words = split_words(line);
      if (words.empty()) {
        io.out << "\n";
        continue;
      }
      if (!history.empty()) history.push_back({"", kTurnTag});
      TagResult res = tag_words(m, words, beam, history);
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) io.out << " ";
        io.out << escape_slashes(words[i]) << "/" << res.tags[i];
        history.push_back({words[i], res.tags[i]});
      }
      io.out << "\n";
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    TaggerModel m = load_model(evalModelPath);
    Corpus c = parse_corpus(read_file(evalCorpusPath));
    std::size_t beam = evalBeam ? evalBeam : m.config.beamWidthDefault;
    EvalReport r = evaluate(m, c, beam, evalStrict);
    io.out << render_eval(r, parse_format(evalFormat));
    return 0;
  }

  if (cv_cmd->parsed()) {
    Corpus c = parse_corpus(read_file(cvCorpusPath));
    OutFormat f = parse_format(cvFormat);
    if (cvFold >= 0) {
      FoldSplit fold = split_folds(c, cvK, static_cast<std::size_t>(cvFold), cvCfg.heldoutFraction);
      TaggerModel m = train(fold.train, fold.heldout, cvCfg);
      EvalReport r = evaluate(m, fold.test, cvCfg.beamWidthDefault, cvStrict);
      io.out << render_eval(r, f);
    } else {
      CrossValReport r = cross_validate(c, cvK, cvCfg, cvStrict, cvJobs);
      io.out << render_crossval(r, f);
    }
    return 0;
  }

  if (ab_cmd->parsed()) {
    Corpus c = parse_corpus(read_file(abCorpusPath));
    AblationReport r = dm_ablation(c, abK, abCfg, abStrict, abJobs);
    io.out << render_ablation(r, parse_format(abFormat));
    return 0;
  }

  if (cl_cmd->parsed()) {
    Corpus c = parse_corpus(read_file(clCorpusPath));
    io.out << "tag classes:\n" << render_hierarchy(cluster_pos(c));
    if (clWords || !clTag.empty()) {
      Vocabulary vocab = build_vocabulary(c, clMinCount);
      std::map<PosTag, ClassHierarchy> hs = cluster_words(c, vocab);
      for (const auto& [tag, h] : hs) {
        if (!clTag.empty() && tag != clTag) continue;
        io.out << "\nword classes under " << tag << ":\n" << render_hierarchy(h);
      }
    }
    return 0;
  }

  if (an_cmd->parsed()) {
    Corpus c = parse_corpus(read_file(anCorpusPath));
    OutFormat f = parse_format(anFormat);
    bool all = anReport == "all";
    bool ran = false;
    if (all || anReport == "turn-initial") {
      io.out << render_turn_initial(turn_initial_counts(c), f);
      ran = true;
    }
    if (all || anReport == "moves") {
      if (ran) io.out << "\n";
      io.out << render_move_cooccurrence(move_cooccurrence(c), f);
      ran = true;
    }
    if (all || anReport == "prior-acts") {
      if (ran) io.out << "\n";
      io.out << render_prior_acts(prior_act_report(c), f);
      ran = true;
    }
    if (!ran) fail(Err::InvalidConfig, "unknown report '" + anReport + "'");
    return 0;
  }

  if (gen_cmd->parsed()) {
    if (genPreset.empty() == genSpecPath.empty())
      fail(Err::InvalidSpec, "give exactly one of --preset and --spec");
    GeneratorSpec spec =
        genPreset.empty() ? spec_from_json(read_file(genSpecPath)) : preset_spec(genPreset);
    if (genDialogs) spec.dialogCount = genDialogs;
    if (genTurns) spec.turnsPerDialog = genTurns;
    if (genSeed >= 0) spec.seed = static_cast<std::uint64_t>(genSeed);
    SyntheticResult res = generate_synthetic(spec);
    std::string text = render_corpus(res.corpus);
    if (genOutPath.empty()) {
      io.out << text;
      io.err << "true_perplexity=" << std::setprecision(12) << res.truePerplexity << "\n";
    } else {
      std::ofstream f(genOutPath, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write '" + genOutPath + "'");
      f << text;
      io.out << "true_perplexity=" << std::setprecision(12) << res.truePerplexity << "\n";
    }
    return 0;
  }

  return 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  try {
    return dispatch(args, CliStreams{in, out, err});
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
}

}  // namespace dmtag
