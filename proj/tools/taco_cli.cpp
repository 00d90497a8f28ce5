// Command-line front end: ingest, extract, stats, train, eval, baseline-freq.
// Every command writes a resolved-config echo (config.json, including the
// PRNG identifier) into its output directory so runs can be replayed exactly.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "taco/taco.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw taco::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw taco::IoError("failed writing " + path.string());
}

void write_echo(const fs::path& dir, const std::string& command, const json& options) {
  json j;
  j["command"] = command;
  j["prng"] = taco::kPrngName;
  j["options"] = options;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// Git-style content hash of a file: sha1("blob <size>\0" + bytes), hex.
std::string git_blob_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw taco::IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string body = buf.str();
  std::string blob = "blob " + std::to_string(body.size());
  blob.push_back('\0');
  blob += body;

  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw taco::IoError("sha1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

// Triples of `path` mapped into g's id space; relations must be known,
// entities must already exist in g (scoring needs in-graph endpoints).
std::vector<taco::Triple> read_triples_in(const taco::KnowledgeGraph& g,
                                          const std::string& path) {
  const taco::KnownVocab vocab{g.entity_names(), g.relation_names()};
  const taco::KnowledgeGraph h = taco::ingest_tsv(path, vocab);
  for (const taco::Triple& t : h.triples()) {
    if (t.head >= g.num_entities() || t.tail >= g.num_entities())
      throw taco::VocabularyError("entity in " + path + " does not appear in the graph: " +
                                  h.entity_name(t.head >= g.num_entities() ? t.head : t.tail));
  }
  return h.triples();
}

json summary_json(const taco::KnowledgeGraph& g) {
  return json{{"num_entities", g.num_entities()},
              {"num_relations", g.num_relations()},
              {"num_triples", g.num_triples()}};
}

taco::ExtractionMode parse_extraction_or_throw(const std::string& name) {
  const auto mode = taco::parse_extraction_mode(name);
  if (!mode) throw taco::ArgumentError("unknown extraction mode: " + name);
  return *mode;
}

// --- command configurations --------------------------------------------------

struct IngestArgs {
  std::vector<std::string> triples;
  std::string out;
};

struct ExtractArgs {
  std::string triples;
  std::vector<std::size_t> indices;
  std::string mode = "ccn";
  std::uint32_t k = 2;
  std::uint32_t feature_width = 32;
  std::string out;
};

struct StatsArgs {
  std::string triples;
  std::string targets;  // optional separate target list
  std::uint32_t k = 2;
  std::string split;
  unsigned threads = 1;
  std::string out;
};

struct TrainArgs {
  std::string train;
  std::string val;  // optional
  std::string score_mode = "full";
  std::string extraction = "ccn";
  taco::TrainConfig cfg;
  unsigned threads = 1;
  std::string out;
};

struct EvalArgs {
  std::string graph;
  std::string test;
  std::string checkpoint;  // empty for the frequency baseline
  std::vector<std::string> extra_known;
  taco::EvalConfig cfg;
  bool unfiltered = false;
  unsigned threads = 1;
  std::string out;
};

int run_ingest(const IngestArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  json files = json::array();
  std::optional<taco::KnownVocab> vocab;
  json primary;
  for (const std::string& path : a.triples) {
    const taco::KnowledgeGraph g = taco::ingest_tsv(path, vocab);
    json entry = summary_json(g);
    entry["path"] = path;
    files.push_back(entry);
    if (!vocab) {
      primary = summary_json(g);
      vocab = taco::KnownVocab{g.entity_names(), g.relation_names()};
    }
  }
  json j = primary;
  j["files"] = files;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  write_echo(dir, "ingest", json{{"triples", a.triples}, {"out", a.out}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_extract(const ExtractArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const taco::ExtractionMode mode = parse_extraction_or_throw(a.mode);
  const taco::KnowledgeGraph g = taco::ingest_tsv(a.triples);
  write_echo(dir, "extract",
             json{{"triples", a.triples},
                  {"index", a.indices},
                  {"mode", a.mode},
                  {"k", a.k},
                  {"feature_width", a.feature_width},
                  {"out", a.out}});
  for (std::size_t idx : a.indices) {
    if (idx >= g.num_triples())
      throw taco::ArgumentError("triple index " + std::to_string(idx) +
                                " out of range (graph has " +
                                std::to_string(g.num_triples()) + " triples)");
    const taco::Triple target = g.triples()[idx];
    const taco::ExtractedSubgraph sub =
        taco::label_nodes(g, taco::extract(g, target, mode, a.k), a.feature_width);
    const std::string name =
        "sub_" + std::to_string(idx) + "_" + taco::extraction_mode_name(mode) + "_k" +
        std::to_string(a.k) + ".json";
    write_text(dir / name, taco::subgraph_to_json(sub).dump(2) + "\n");
  }
  return 0;
}

int run_stats(const StatsArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const taco::KnowledgeGraph g = taco::ingest_tsv(a.triples);
  const std::vector<taco::Triple> targets =
      a.targets.empty() ? g.triples() : read_triples_in(g, a.targets);
  const taco::SubgraphStats s = taco::compute_stats(g, targets, a.k, a.split, a.threads);
  write_text(dir / "stats.csv", taco::stats_to_csv(s));
  write_text(dir / "stats.txt", taco::stats_to_text(s));
  write_echo(dir, "stats",
             json{{"triples", a.triples},
                  {"targets", a.targets},
                  {"k", a.k},
                  {"split", a.split},
                  {"threads", a.threads},
                  {"out", a.out}});
  std::cout << taco::stats_to_text(s);
  return 0;
}

json train_options_json(const TrainArgs& a) {
  const taco::TrainConfig& c = a.cfg;
  return json{{"train", a.train},
              {"val", a.val},
              {"score_mode", a.score_mode},
              {"extraction", a.extraction},
              {"k", c.hops},
              {"d", c.d},
              {"margin", c.margin},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"layers", c.layers},
              {"negatives", c.negatives},
              {"epochs", c.epochs},
              {"dropout", c.dropout},
              {"edge_dropout", c.edge_dropout},
              {"weight_decay", c.weight_decay},
              {"lr_patience", c.lr_patience},
              {"stop_patience", c.stop_patience},
              {"lr_divisor", c.lr_divisor},
              {"seed", c.seed},
              {"threads", a.threads},
              {"out", a.out}};
}

int run_train(TrainArgs a) {
  const fs::path dir = ensure_out_dir(a.out);
  const taco::ScoreMode mode = taco::parse_score_mode(a.score_mode);
  a.cfg.extraction = parse_extraction_or_throw(a.extraction);
  const taco::KnowledgeGraph g = taco::ingest_tsv(a.train);
  const std::vector<taco::Triple> val =
      a.val.empty() ? std::vector<taco::Triple>{} : read_triples_in(g, a.val);
  write_echo(dir, "train", train_options_json(a));

  const taco::TrainResult result = taco::train(g, g.triples(), val, a.cfg, mode, a.threads);
  const taco::Checkpoint ckpt{result.params, result.slots, mode,
                              a.cfg.extraction, a.cfg.hops, a.cfg.seed};
  taco::save_checkpoint((dir / "checkpoint.json").string(), ckpt);
  write_text(dir / "training_log.csv", taco::training_log_csv(result.log));
  std::cout << "epochs_run," << result.epochs_run << "\n";
  if (!val.empty())
    std::cout << "best_epoch," << result.best_epoch << "\nbest_val_loss,"
              << result.best_val_loss << "\n";
  return 0;
}

json eval_options_json(const EvalArgs& a, const std::string& scorer_name) {
  return json{{"graph", a.graph},
              {"test", a.test},
              {"checkpoint", a.checkpoint},
              {"extra_known", a.extra_known},
              {"scorer", scorer_name},
              {"rank_negatives", a.cfg.rank_negatives},
              {"class_negatives", a.cfg.class_negatives},
              {"filtered", !a.unfiltered},
              {"seeds", a.cfg.seeds},
              {"hits_levels", a.cfg.hits_levels},
              {"threads", a.threads},
              {"out", a.out}};
}

int run_eval(EvalArgs a, bool baseline) {
  const fs::path dir = ensure_out_dir(a.out);
  a.cfg.filtered = !a.unfiltered;
  const taco::KnowledgeGraph g = taco::ingest_tsv(a.graph);
  const std::vector<taco::Triple> test = read_triples_in(g, a.test);

  taco::TripleSet known(g.triples().begin(), g.triples().end());
  known.insert(test.begin(), test.end());
  for (const std::string& path : a.extra_known)
    for (const taco::Triple& t : read_triples_in(g, path)) known.insert(t);

  std::string hash;
  taco::TripleScorer scorer;
  taco::RelationSlots slots;
  taco::Checkpoint ckpt;
  if (baseline) {
    scorer = taco::frequency_baseline(g);
  } else {
    ckpt = taco::load_checkpoint(a.checkpoint);
    if (ckpt.params.dims.num_base_relations != g.num_relations())
      throw taco::CheckpointError("checkpoint relation count does not match the graph");
    hash = git_blob_hash(a.checkpoint);
    slots = ckpt.slots;
    scorer = taco::make_scorer(ckpt.params, slots, g, ckpt.extraction, ckpt.hops, ckpt.mode);
  }

  const json echo = eval_options_json(a, baseline ? "frequency-baseline" : "checkpoint");
  write_echo(dir, baseline ? "baseline-freq" : "eval", echo);
  const taco::EvalReport report =
      taco::evaluate(scorer, g, test, a.cfg, known, a.threads);
  const json j = taco::report_to_json(report, echo, hash);
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_text(dir / "report.csv", taco::report_to_csv(report, echo, hash));
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "taco: inductive link prediction over knowledge graphs.\n"
      "Precedence: command-line flags override config-file values; config files\n"
      "are INI-style with one [section] per command."};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file ([ingest], [extract], ... sections)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.get_config_formatter_base()->arrayDelimiter(',');

  IngestArgs ingest;
  CLI::App* cmd_ingest = app.add_subcommand("ingest", "Ingest TSV triples, write a summary");
  cmd_ingest->add_option("--triples", ingest.triples, "TSV file(s); later files share the first file's relation vocabulary")
      ->required()
      ->expected(-1);
  cmd_ingest->add_option("--out", ingest.out, "output directory")->required();

  ExtractArgs extract;
  CLI::App* cmd_extract = app.add_subcommand("extract", "Dump subgraphs for selected triples");
  cmd_extract->add_option("--triples", extract.triples, "TSV triple file")->required();
  cmd_extract->add_option("--index", extract.indices, "0-based triple indices to extract");
  cmd_extract->add_option("--mode", extract.mode, "enclosing | ccn | ccn+");
  cmd_extract->add_option("--k", extract.k, "hop count");
  cmd_extract->add_option("--feature-width", extract.feature_width, "label clamp width");
  cmd_extract->add_option("--out", extract.out, "output directory")->required();

  StatsArgs stats;
  CLI::App* cmd_stats = app.add_subcommand("stats", "Subgraph statistics over target triples");
  cmd_stats->add_option("--triples", stats.triples, "TSV triple file (the graph)")->required();
  cmd_stats->add_option("--targets", stats.targets,
                        "optional TSV of target triples (default: all graph triples)");
  cmd_stats->add_option("--k", stats.k, "hop count");
  cmd_stats->add_option("--split", stats.split, "split label echoed into the table");
  cmd_stats->add_option("--threads", stats.threads, "worker threads (1 = reference)");
  cmd_stats->add_option("--out", stats.out, "output directory")->required();

  TrainArgs train;
  CLI::App* cmd_train = app.add_subcommand("train", "Train a scoring model");
  cmd_train->add_option("--train", train.train, "training TSV (also the graph)")->required();
  cmd_train->add_option("--val", train.val, "validation TSV (held out)");
  cmd_train->add_option("--score-mode", train.score_mode, "full | relation-only");
  cmd_train->add_option("--extraction", train.extraction, "enclosing | ccn | ccn+");
  cmd_train->add_option("--k", train.cfg.hops, "extraction hop count");
  cmd_train->add_option("--d", train.cfg.d, "embedding width");
  cmd_train->add_option("--margin", train.cfg.margin, "hinge margin");
  cmd_train->add_option("--lr", train.cfg.learning_rate, "learning rate");
  cmd_train->add_option("--batch-size", train.cfg.batch_size, "pairs per update");
  cmd_train->add_option("--layers", train.cfg.layers, "message passing layers");
  cmd_train->add_option("--negatives", train.cfg.negatives, "negatives per positive");
  cmd_train->add_option("--epochs", train.cfg.epochs, "maximum epochs");
  cmd_train->add_option("--dropout", train.cfg.dropout, "node dropout rate");
  cmd_train->add_option("--edge-dropout", train.cfg.edge_dropout, "edge dropout rate");
  cmd_train->add_option("--weight-decay", train.cfg.weight_decay, "L2 coefficient");
  cmd_train->add_option("--lr-patience", train.cfg.lr_patience, "stagnant epochs per rate cut");
  cmd_train->add_option("--stop-patience", train.cfg.stop_patience, "stagnant epochs to stop");
  cmd_train->add_option("--lr-divisor", train.cfg.lr_divisor, "rate divisor on stagnation");
  cmd_train->add_option("--seed", train.cfg.seed, "root random seed");
  cmd_train->add_option("--threads", train.threads, "worker threads (1 = reference)");
  cmd_train->add_option("--out", train.out, "output directory")->required();

  EvalArgs eval;
  CLI::App* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on test triples");
  cmd_eval->add_option("--graph", eval.graph, "graph TSV")->required();
  cmd_eval->add_option("--test", eval.test, "test triples TSV")->required();
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  cmd_eval->add_option("--extra-known", eval.extra_known,
                       "additional known-triple TSVs joined into the filter set");
  cmd_eval->add_option("--rank-negatives", eval.cfg.rank_negatives, "negatives per ranking");
  cmd_eval->add_option("--class-negatives", eval.cfg.class_negatives,
                       "negatives per positive for AUC-PR");
  cmd_eval->add_flag("--unfiltered", eval.unfiltered, "allow known triples as negatives");
  cmd_eval->add_option("--seeds", eval.cfg.seeds, "evaluation seeds");
  cmd_eval->add_option("--hits", eval.cfg.hits_levels, "Hits@N levels");
  cmd_eval->add_option("--threads", eval.threads, "worker threads (1 = reference)");
  cmd_eval->add_option("--out", eval.out, "output directory")->required();

  EvalArgs base;
  CLI::App* cmd_base = app.add_subcommand("baseline-freq",
                                          "Relation-frequency baseline evaluation");
  cmd_base->add_option("--graph", base.graph, "graph TSV")->required();
  cmd_base->add_option("--test", base.test, "test triples TSV")->required();
  cmd_base->add_option("--extra-known", base.extra_known,
                       "additional known-triple TSVs joined into the filter set");
  cmd_base->add_option("--rank-negatives", base.cfg.rank_negatives, "negatives per ranking");
  cmd_base->add_option("--class-negatives", base.cfg.class_negatives,
                       "negatives per positive for AUC-PR");
  cmd_base->add_flag("--unfiltered", base.unfiltered, "allow known triples as negatives");
  cmd_base->add_option("--seeds", base.cfg.seeds, "evaluation seeds");
  cmd_base->add_option("--hits", base.cfg.hits_levels, "Hits@N levels");
  cmd_base->add_option("--threads", base.threads, "worker threads (1 = reference)");
  cmd_base->add_option("--out", base.out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (cmd_ingest->parsed()) return run_ingest(ingest);
    if (cmd_extract->parsed()) return run_extract(extract);
    if (cmd_stats->parsed()) return run_stats(stats);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_eval->parsed()) return run_eval(eval, /*baseline=*/false);
    if (cmd_base->parsed()) return run_eval(base, /*baseline=*/true);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
