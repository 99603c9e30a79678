#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plm/plm.hpp"

namespace fs = std::filesystem;
using namespace plm;

namespace {

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

std::string default_out_dir() {
  const char* env = std::getenv("PLM_OUT_DIR");
  return env && *env ? env : ".";
}

// LABEL=FILE arguments for commands that take several named corpora.
std::pair<std::string, std::string> split_labeled(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw ConfigError("expected LABEL=FILE, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

std::vector<corpus::TokenSequence> encode_corpus_files(const std::vector<std::string>& files,
                                                       const corpus::Vocabulary& vocab) {
  std::vector<corpus::TokenSequence> out;
  for (const auto& f : files)
    for (const auto& tokens : corpus::read_corpus_file(f))
      out.push_back(corpus::encode(tokens, vocab, /*append_eos=*/true));
  return out;
}

std::vector<std::int32_t> flat_ids(const std::vector<corpus::TokenSequence>& sentences) {
  std::vector<std::int32_t> out;
  for (const auto& s : sentences) out.insert(out.end(), s.ids.begin(), s.ids.end());
  return out;
}

// Input files for a command, plus the optional speaker restriction that turns
// a full script into one persona's data.
struct DataFlags {
  std::vector<std::string> corpus_files;
  std::vector<std::string> script_files;
  std::string speaker;

  void attach(CLI::App& cmd) {
    cmd.add_option("--corpus", corpus_files, "plain text, one sentence per line");
    cmd.add_option("--script", script_files, "dialogue script, SPEAKER<TAB>utterance per line");
    cmd.add_option("--speaker", speaker, "keep only this speaker's sentences / replies");
  }

  std::vector<std::string> inputs() const {
    std::vector<std::string> all = corpus_files;
    all.insert(all.end(), script_files.begin(), script_files.end());
    return all;
  }

  std::vector<corpus::TokenSequence> sentences(const corpus::Vocabulary& vocab) const {
    auto out = encode_corpus_files(corpus_files, vocab);
    for (const auto& f : script_files) {
      auto lines = corpus::parse_script_file(f);
      if (!speaker.empty()) lines = corpus::filter_speaker(lines, speaker);
      for (const auto& l : lines) {
        const auto tokens = corpus::tokenize(l.text);
        if (!tokens.empty()) out.push_back(corpus::encode(tokens, vocab, /*append_eos=*/true));
      }
    }
    if (out.empty()) throw DataError("no sentences found in the given inputs");
    return out;
  }

  std::vector<corpus::MessageReplyPair> reply_pairs(const corpus::Vocabulary& vocab) const {
    if (script_files.empty())
      throw ConfigError("the reply task needs --script inputs (message/reply pairs)");
    std::vector<corpus::MessageReplyText> texts;
    for (const auto& f : script_files) {
      const auto script = corpus::parse_script_file(f);
      for (std::size_t i = 0; i + 1 < script.size(); ++i) {
        if (corpus::detail::iequals(script[i].speaker, script[i + 1].speaker)) continue;
        if (!speaker.empty() && !corpus::detail::iequals(script[i + 1].speaker, speaker)) continue;
        texts.push_back({script[i].text, script[i + 1].text});
      }
    }
    auto pairs = corpus::encode_pairs(texts, vocab);
    if (pairs.empty()) throw DataError("no usable message/reply pairs in the given inputs");
    return pairs;
  }

  std::vector<net::Sample> samples(io::TaskKind task, const corpus::Vocabulary& vocab) const {
    return task == io::TaskKind::kSentence ? models::make_lm_samples(sentences(vocab))
                                           : models::make_reply_samples(reply_pairs(vocab));
  }
};

// Training hyperparameters: config-file values first, explicit flags win.
struct TrainFlags {
  std::string config_file;
  net::TrainConfig v;
  CLI::Option* opt[10] = {};

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "key = value training config file");
    opt[0] = cmd.add_option("--lr", v.lr, "learning rate");
    opt[1] = cmd.add_option("--lr-decay", v.lr_decay, "per-epoch decay factor once decay starts");
    opt[2] = cmd.add_option("--lr-decay-start", v.lr_decay_start, "last epoch at full rate");
    opt[3] = cmd.add_option("--clip", v.clip, "global gradient norm cap");
    opt[4] = cmd.add_option("--epochs", v.epochs, "training epochs");
    opt[5] = cmd.add_option("--batch-size", v.batch_size, "samples per update");
    opt[6] = cmd.add_option("--bptt-cap", v.bptt_cap, "max unrolled timesteps");
    opt[7] = cmd.add_option("--seed", v.seed, "rng seed");
    opt[8] = cmd.add_option("--precision", v.precision, "32 or 64 bit training");
    opt[9] = cmd.add_option("--validation-fraction", v.validation_fraction,
                            "held-out share of the training data");
  }

  // `finetune_rate` drops the default lr to the fine-tune value unless the
  // user pinned lr via file or flag.
  net::TrainConfig resolve(bool finetune_rate) const {
    net::TrainConfig cfg;
    bool lr_pinned = opt[0]->count() > 0;
    if (!config_file.empty()) {
      const auto map = io::parse_config_file(config_file);
      cfg = io::train_config_from(map);
      lr_pinned = lr_pinned || map.count("lr") > 0;
    }
    if (finetune_rate && !lr_pinned) cfg = transfer::finetune_config(cfg);
    if (opt[0]->count()) cfg.lr = v.lr;
    if (opt[1]->count()) cfg.lr_decay = v.lr_decay;
    if (opt[2]->count()) cfg.lr_decay_start = v.lr_decay_start;
    if (opt[3]->count()) cfg.clip = v.clip;
    if (opt[4]->count()) cfg.epochs = v.epochs;
    if (opt[5]->count()) cfg.batch_size = v.batch_size;
    if (opt[6]->count()) cfg.bptt_cap = v.bptt_cap;
    if (opt[7]->count()) cfg.seed = v.seed;
    if (opt[8]->count()) cfg.precision = v.precision;
    if (opt[9]->count()) cfg.validation_fraction = v.validation_fraction;
    cfg.validate();
    return cfg;
  }
};

struct SchemeFlags {
  std::string scheme = "relearn";
  std::string surplus_kind = "affine";
  std::size_t fixed_n = 1;

  void attach(CLI::App& cmd) {
    cmd.add_option("--scheme", scheme, "transfer scheme")
        ->check(CLI::IsMember({"relearn", "surplus", "fixed-n"}));
    cmd.add_option("--surplus-kind", surplus_kind, "surplus block type")
        ->check(CLI::IsMember({"affine", "lstm"}));
    cmd.add_option("--fixed-n", fixed_n, "how many leading LSTM layers to freeze");
  }

  transfer::SchemeSpec resolve() const {
    if (scheme == "relearn") return transfer::SchemeSpec::relearn_whole();
    if (scheme == "surplus")
      return transfer::SchemeSpec::surplus_layer(
          surplus_kind == "lstm" ? net::SurplusKind::kLstm : net::SurplusKind::kAffine);
    return transfer::SchemeSpec::fixed_first_n(fixed_n);
  }

  io::ConfigMap describe() const {
    io::ConfigMap m = {{"scheme", scheme}};
    if (scheme == "surplus") m["surplus_kind"] = surplus_kind;
    if (scheme == "fixed-n") m["fixed_n"] = std::to_string(fixed_n);
    return m;
  }
};

struct DecodeFlags {
  std::string mode = "greedy";
  double temperature = 1.0;
  std::size_t max_len = 64;
  std::uint64_t seed = 1;

  void attach(CLI::App& cmd) {
    cmd.add_option("--mode", mode, "decoding mode")->check(CLI::IsMember({"greedy", "sampled"}));
    cmd.add_option("--temperature", temperature, "sampling temperature");
    cmd.add_option("--max-len", max_len, "generation length cap");
    cmd.add_option("--decode-seed", seed, "sampling seed");
  }

  models::DecodeConfig resolve() const {
    models::DecodeConfig cfg;
    cfg.mode = mode == "greedy" ? models::DecodeMode::kGreedy : models::DecodeMode::kSampled;
    cfg.temperature = temperature;
    cfg.max_len = max_len;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

void emit_manifest(const std::string& command, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, io::ConfigMap config,
                   std::uint64_t seed, const fs::path& path) {
  io::Manifest m;
  m.command = command;
  m.inputs = inputs;
  m.outputs = outputs;
  m.config = std::move(config);
  m.seed = seed;
  io::write_manifest(m, path);
}

corpus::Vocabulary load_vocab_checked(const std::string& path) {
  if (path.empty()) throw ConfigError("--vocab is required");
  return corpus::load_vocabulary_file(path);
}

void check_fingerprint(std::uint64_t model_fp, const corpus::Vocabulary& vocab) {
  if (model_fp != vocab.fingerprint())
    throw DataError("vocabulary fingerprint does not match the checkpoint; "
                    "the model was trained with a different vocabulary");
}

template <typename S>
io::Checkpoint<S> load_model_checked(const std::string& path, const corpus::Vocabulary& vocab,
                                     bool cast) {
  if (path.empty()) throw ConfigError("--model is required");
  auto ckpt = io::load_checkpoint<S>(path, cast);
  check_fingerprint(ckpt.vocab_fingerprint, vocab);
  return ckpt;
}

// Dispatch on the dtype a checkpoint was saved with (read-only commands).
template <typename F>
void with_stored_precision(const std::string& path, F&& f) {
  if (path.empty()) throw ConfigError("--model is required");
  const auto header = io::peek_checkpoint(path);
  if (header.at("dtype").get<std::string>() == "f32")
    f(float{});
  else
    f(double{});
}

std::string render_tokens(corpus::TokenSequence seq, const corpus::Vocabulary& vocab) {
  if (seq.terminated && !seq.ids.empty()) seq.ids.pop_back();  // hide the closing eos
  const auto words = corpus::decode(seq, vocab);
  std::string line;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) line += ' ';
    line += words[i];
  }
  return line;
}

std::string command_line;  // argv as invoked, recorded in every manifest

// ---------------------------------------------------------------------------
// build-vocab
// ---------------------------------------------------------------------------

struct BuildVocabCmd {
  DataFlags data;
  std::size_t max_size = 10000;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    std::vector<std::vector<std::string>> token_lines;
    for (const auto& f : data.corpus_files) {
      auto lines = corpus::read_corpus_file(f);
      token_lines.insert(token_lines.end(), lines.begin(), lines.end());
    }
    for (const auto& f : data.script_files) {
      auto lines = corpus::parse_script_file(f);
      if (!data.speaker.empty()) lines = corpus::filter_speaker(lines, data.speaker);
      for (const auto& l : lines) {
        auto tokens = corpus::tokenize(l.text);
        if (!tokens.empty()) token_lines.push_back(std::move(tokens));
      }
    }
    if (token_lines.empty()) throw DataError("build-vocab: no input tokens");
    const auto vocab = corpus::build_vocab(token_lines, max_size);

    std::vector<std::string> flat;
    for (const auto& l : token_lines) flat.insert(flat.end(), l.begin(), l.end());

    const fs::path out_path = out.empty() ? fs::path(out_dir) / "vocab.txt" : fs::path(out);
    std::ostringstream text;
    corpus::save_vocabulary(vocab, text);
    io::write_file_atomic(out_path, text.str());

    emit_manifest(command_line, data.inputs(), {out_path.string()},
                  {{"max_size", std::to_string(max_size)}}, 0,
                  fs::path(out_dir) / "build-vocab.manifest.json");
    std::cout << "vocabulary size " << vocab.size() << " (oov rate "
              << io::csv_real(corpus::oov_rate(flat, vocab)) << ") -> " << out_path.string()
              << "\n";
  }
};

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainCmd {
  DataFlags data;
  TrainFlags tf;
  std::string task = "sentence";
  std::string vocab_path;
  std::size_t embed_dim = 64;
  std::vector<std::size_t> hidden = {64, 64, 64};
  std::string out_dir = default_out_dir();
  std::string out;
  std::string metrics;

  template <typename S>
  void run_as(const net::TrainConfig& cfg) const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto kind = io::task_from_name(task);
    const auto all = data.samples(kind, vocab);
    const auto [train_part, val_part] = net::split_samples(all, cfg.validation_fraction, cfg.seed);

    io::Checkpoint<S> ckpt;
    ckpt.params = net::init_params<S>(vocab.size(), embed_dim, hidden, cfg.seed);
    ckpt.vocab_fingerprint = vocab.fingerprint();
    ckpt.task = kind;
    const auto trace =
        net::train(ckpt.params, train_part, val_part, cfg, net::all_trainable(ckpt.params));
    ckpt.epochs_completed = cfg.epochs;
    ckpt.lineage.push_back("pretrain task=" + task + " epochs=" + std::to_string(cfg.epochs) +
                           " seed=" + std::to_string(cfg.seed));

    const fs::path model_path = out.empty() ? fs::path(out_dir) / "model.ckpt" : fs::path(out);
    const fs::path metrics_path =
        metrics.empty() ? fs::path(out_dir) / "pretrain_metrics.csv" : fs::path(metrics);
    io::save_checkpoint(ckpt, model_path);
    std::ostringstream csv;
    io::write_metrics_csv(csv, trace);
    io::write_file_atomic(metrics_path, csv.str());

    io::ConfigMap conf = io::config_to_map(cfg);
    conf["task"] = task;
    conf["embed_dim"] = std::to_string(embed_dim);
    conf["hidden"] = [&] {
      std::string s;
      for (std::size_t h : hidden) s += (s.empty() ? "" : ",") + std::to_string(h);
      return s;
    }();
    emit_manifest(command_line, data.inputs(), {model_path.string(), metrics_path.string()},
                  std::move(conf), cfg.seed, fs::path(out_dir) / "pretrain.manifest.json");

    if (!trace.empty())
      std::cout << "final train ppl " << io::csv_real(trace.back().train_ppl) << ", val ppl "
                << io::csv_real(trace.back().val_ppl) << "\n";
    std::cout << "model -> " << model_path.string() << "\n";
  }

  void run() const {
    const auto cfg = tf.resolve(/*finetune_rate=*/false);
    if (cfg.precision == 32)
      run_as<float>(cfg);
    else
      run_as<double>(cfg);
  }
};

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

struct FinetuneCmd {
  DataFlags data;
  TrainFlags tf;
  SchemeFlags scheme;
  std::string model_path;
  std::string vocab_path;
  bool cast = false;
  std::string out_dir = default_out_dir();
  std::string out;
  std::string metrics;

  template <typename S>
  void run_as(const net::TrainConfig& cfg) const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto general = load_model_checked<S>(model_path, vocab, cast);
    const auto samples = data.samples(general.task, vocab);
    const auto spec = scheme.resolve();
    const auto result = transfer::finetune(general, samples, spec, cfg, vocab.fingerprint());

    const fs::path out_path = out.empty() ? fs::path(out_dir) / "finetuned.ckpt" : fs::path(out);
    const fs::path metrics_path =
        metrics.empty() ? fs::path(out_dir) / "finetune_metrics.csv" : fs::path(metrics);
    io::save_checkpoint(result.checkpoint, out_path);
    std::ostringstream csv;
    io::write_metrics_csv(csv, result.trace);
    io::write_file_atomic(metrics_path, csv.str());

    io::ConfigMap conf = io::config_to_map(cfg);
    for (const auto& [k, v] : scheme.describe()) conf[k] = v;
    auto inputs = data.inputs();
    inputs.push_back(model_path);
    emit_manifest(command_line, inputs, {out_path.string(), metrics_path.string()},
                  std::move(conf), cfg.seed, fs::path(out_dir) / "finetune.manifest.json");

    if (!result.trace.empty())
      std::cout << "final train ppl " << io::csv_real(result.trace.back().train_ppl)
                << ", val ppl " << io::csv_real(result.trace.back().val_ppl) << "\n";
    std::cout << "model -> " << out_path.string() << "\n";
  }

  void run() const {
    const auto cfg = tf.resolve(/*finetune_rate=*/true);
    if (cfg.precision == 32)
      run_as<float>(cfg);
    else
      run_as<double>(cfg);
  }
};

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateCmd {
  DecodeFlags decode;
  std::string model_path;
  std::string vocab_path;
  std::string input_file;
  std::vector<std::string> texts;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto cfg = decode.resolve();

    std::vector<corpus::TokenSequence> prompts;
    std::vector<std::string> input_names;
    if (!input_file.empty()) {
      for (const auto& tokens : corpus::read_corpus_file(input_file))
        prompts.push_back(corpus::encode(tokens, vocab, /*append_eos=*/false));
      input_names.push_back(input_file);
    }
    for (const auto& t : texts) {
      const auto tokens = corpus::tokenize(t);
      if (!tokens.empty()) prompts.push_back(corpus::encode(tokens, vocab, /*append_eos=*/false));
    }
    if (prompts.empty()) throw ConfigError("generate: give --input or --text");

    std::string rendered;
    with_stored_precision(model_path, [&](auto tag) {
      using S = decltype(tag);
      const auto ckpt = load_model_checked<S>(model_path, vocab, /*cast=*/false);
      std::vector<corpus::TokenSequence> outputs;
      if (ckpt.task == io::TaskKind::kSentence) {
        models::SentenceCompletionModel<S> model{ckpt.params, ckpt.vocab_fingerprint};
        outputs = models::batch_generate(model, prompts, cfg);
      } else {
        models::MessageReplyModel<S> model{ckpt.params, ckpt.vocab_fingerprint};
        outputs = models::batch_generate(model, prompts, cfg);
      }
      for (const auto& seq : outputs) rendered += render_tokens(seq, vocab) + "\n";
    });

    const fs::path out_path = out.empty() ? fs::path(out_dir) / "generations.txt" : fs::path(out);
    io::write_file_atomic(out_path, rendered);
    auto inputs = input_names;
    inputs.push_back(model_path);
    emit_manifest(command_line, inputs, {out_path.string()},
                  {{"mode", decode.mode},
                   {"temperature", io::csv_real(decode.temperature)},
                   {"max_len", std::to_string(decode.max_len)}},
                  decode.seed, fs::path(out_dir) / "generate.manifest.json");
    std::cout << rendered;
  }
};

// ---------------------------------------------------------------------------
// eval-ppl
// ---------------------------------------------------------------------------

struct EvalPplCmd {
  DataFlags data;
  std::string model_path;
  std::string vocab_path;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    std::string csv = "dataset,perplexity\n";
    with_stored_precision(model_path, [&](auto tag) {
      using S = decltype(tag);
      const auto ckpt = load_model_checked<S>(model_path, vocab, /*cast=*/false);
      const auto samples = data.samples(ckpt.task, vocab);
      const double ppl = net::perplexity(ckpt.params, samples);
      csv += "all," + io::csv_real(ppl) + "\n";
      std::cout << "perplexity " << io::csv_real(ppl) << " over " << samples.size()
                << " samples\n";
    });
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "ppl.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv);
    auto inputs = data.inputs();
    inputs.push_back(model_path);
    emit_manifest(command_line, inputs, {out_path.string()}, {}, 0,
                  fs::path(out_dir) / "eval-ppl.manifest.json");
  }
};

// ---------------------------------------------------------------------------
// eval-style
// ---------------------------------------------------------------------------

struct EvalStyleCmd {
  std::string candidate_file;
  std::string target_file;
  std::string vocab_path;
  double epsilon = 1e-8;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto p = eval::word_distribution(
        flat_ids(encode_corpus_files({candidate_file}, vocab)), vocab.size());
    const auto q = eval::word_distribution(
        flat_ids(encode_corpus_files({target_file}, vocab)), vocab.size());
    const double ce = eval::style_cross_entropy(p, q, epsilon);

    std::string csv = "candidate,target,cross_entropy_nats\n";
    csv += candidate_file + "," + target_file + "," + io::csv_real(ce) + "\n";
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "style.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv);
    emit_manifest(command_line, {candidate_file, target_file}, {out_path.string()},
                  {{"epsilon", io::csv_real(epsilon)}}, 0,
                  fs::path(out_dir) / "eval-style.manifest.json");
    std::cout << "style cross entropy " << io::csv_real(ce) << " nats\n";
  }
};

// ---------------------------------------------------------------------------
// similarity-matrix
// ---------------------------------------------------------------------------

struct SimilarityCmd {
  std::vector<std::string> labeled;
  std::string vocab_path;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    std::vector<eval::LabeledCorpus> corpora;
    std::vector<std::string> inputs;
    for (const auto& arg : labeled) {
      auto [label, file] = split_labeled(arg);
      corpora.emplace_back(label, flat_ids(encode_corpus_files({file}, vocab)));
      inputs.push_back(file);
    }
    const auto m = eval::similarity_matrix(corpora, vocab.size(), epsilon, seed);

    std::ostringstream csv;
    io::write_matrix_csv(csv, m);
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "similarity.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv.str());
    emit_manifest(command_line, inputs, {out_path.string()},
                  {{"epsilon", io::csv_real(epsilon)}}, seed,
                  fs::path(out_dir) / "similarity-matrix.manifest.json");
    std::cout << csv.str();
  }
};

// ---------------------------------------------------------------------------
// size-sweep
// ---------------------------------------------------------------------------

struct SizeSweepCmd {
  DataFlags data;
  TrainFlags tf;
  SchemeFlags scheme;
  std::string model_path;
  std::string vocab_path;
  std::vector<std::size_t> sizes;
  bool cast = false;
  std::string out_dir = default_out_dir();
  std::string out;

  template <typename S>
  void run_as(const net::TrainConfig& cfg) const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto general = load_model_checked<S>(model_path, vocab, cast);
    const auto samples = data.samples(general.task, vocab);
    const auto rows =
        transfer::data_size_sweep(general, samples, sizes, scheme.resolve(), cfg, vocab.fingerprint());

    std::ostringstream csv;
    io::write_sweep_csv(csv, rows);
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "sweep.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv.str());

    io::ConfigMap conf = io::config_to_map(cfg);
    for (const auto& [k, v] : scheme.describe()) conf[k] = v;
    conf["sizes"] = [&] {
      std::string s;
      for (std::size_t n : sizes) s += (s.empty() ? "" : ",") + std::to_string(n);
      return s;
    }();
    auto inputs = data.inputs();
    inputs.push_back(model_path);
    emit_manifest(command_line, inputs, {out_path.string()}, std::move(conf), cfg.seed,
                  fs::path(out_dir) / "size-sweep.manifest.json");
    std::cout << csv.str();
  }

  void run() const {
    const auto cfg = tf.resolve(/*finetune_rate=*/true);
    if (cfg.precision == 32)
      run_as<float>(cfg);
    else
      run_as<double>(cfg);
  }
};

// ---------------------------------------------------------------------------
// style-convergence
// ---------------------------------------------------------------------------

struct ConvergenceCmd {
  DataFlags data;
  TrainFlags tf;
  SchemeFlags scheme;
  DecodeFlags decode;
  std::string model_path;
  std::string vocab_path;
  std::string messages_file;
  std::vector<std::string> targets;
  std::vector<std::size_t> probe_epochs;
  double epsilon = 1e-8;
  bool cast = false;
  std::string out_dir = default_out_dir();
  std::string out;

  template <typename S>
  void run_as(const net::TrainConfig& cfg) const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto general = load_model_checked<S>(model_path, vocab, cast);
    if (general.task != io::TaskKind::kReply)
      throw ConfigError("style-convergence needs a message-reply model");
    const auto persona = data.samples(io::TaskKind::kReply, vocab);

    std::vector<eval::LabeledCorpus> target_corpora;
    std::vector<std::string> inputs;
    for (const auto& arg : targets) {
      auto [label, file] = split_labeled(arg);
      target_corpora.emplace_back(label, flat_ids(encode_corpus_files({file}, vocab)));
      inputs.push_back(file);
    }
    if (messages_file.empty()) throw ConfigError("--messages is required");
    std::vector<corpus::TokenSequence> messages;
    for (const auto& tokens : corpus::read_corpus_file(messages_file))
      messages.push_back(corpus::encode(tokens, vocab, /*append_eos=*/false));

    const auto table =
        eval::style_convergence(general, scheme.resolve(), persona, target_corpora, probe_epochs,
                                messages, cfg, decode.resolve(), vocab.size(), epsilon);

    std::ostringstream csv;
    io::write_convergence_csv(csv, table);
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "convergence.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv.str());

    io::ConfigMap conf = io::config_to_map(cfg);
    for (const auto& [k, v] : scheme.describe()) conf[k] = v;
    conf["epsilon"] = io::csv_real(epsilon);
    conf["decode_mode"] = decode.mode;
    auto all_inputs = data.inputs();
    all_inputs.insert(all_inputs.end(), inputs.begin(), inputs.end());
    all_inputs.push_back(messages_file);
    all_inputs.push_back(model_path);
    emit_manifest(command_line, all_inputs, {out_path.string()}, std::move(conf), cfg.seed,
                  fs::path(out_dir) / "style-convergence.manifest.json");
    std::cout << csv.str();
  }

  void run() const {
    const auto cfg = tf.resolve(/*finetune_rate=*/true);
    if (cfg.precision == 32)
      run_as<float>(cfg);
    else
      run_as<double>(cfg);
  }
};

// ---------------------------------------------------------------------------
// ngram-train / ngram-ppl
// ---------------------------------------------------------------------------

struct NgramTrainCmd {
  DataFlags data;
  std::string vocab_path;
  std::size_t order = 5;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    const auto sentences = data.sentences(vocab);
    const auto counts = ngram::count_ngrams(sentences, order, vocab.size());
    const auto model = ngram::estimate_kn(counts, vocab.fingerprint());

    std::ostringstream text;
    ngram::dump_model(model, vocab, text);
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "model.arpa" : fs::path(out);
    io::write_file_atomic(out_path, text.str());
    emit_manifest(command_line, data.inputs(), {out_path.string()},
                  {{"order", std::to_string(order)}}, 0,
                  fs::path(out_dir) / "ngram-train.manifest.json");
    std::cout << "order-" << order << " model over " << counts.sentences << " sentences -> "
              << out_path.string() << "\n";
  }
};

struct NgramPplCmd {
  DataFlags data;
  std::string model_path;
  std::string vocab_path;
  std::string out_dir = default_out_dir();
  std::string out;

  void run() const {
    const auto vocab = load_vocab_checked(vocab_path);
    if (model_path.empty()) throw ConfigError("--model is required");
    std::ifstream in(model_path);
    if (!in) throw IoError("cannot open " + model_path);
    const auto model = ngram::load_model(in, vocab);
    const auto sentences = data.sentences(vocab);
    const double ppl = ngram::ngram_perplexity(model, sentences);

    std::string csv = "dataset,perplexity\nall," + io::csv_real(ppl) + "\n";
    const fs::path out_path = out.empty() ? fs::path(out_dir) / "ngram_ppl.csv" : fs::path(out);
    io::write_file_atomic(out_path, csv);
    auto inputs = data.inputs();
    inputs.push_back(model_path);
    emit_manifest(command_line, inputs, {out_path.string()}, {}, 0,
                  fs::path(out_dir) / "ngram-ppl.manifest.json");
    std::cout << "perplexity " << io::csv_real(ppl) << "\n";
  }
};

void add_out_flags(CLI::App& cmd, std::string& out_dir, std::string& out, const char* what) {
  cmd.add_option("--out-dir", out_dir, "output directory (env PLM_OUT_DIR)")
      ->capture_default_str();
  cmd.add_option("--out", out, what);
}

}  // namespace

int main(int argc, char** argv) {
  command_line = join_args(argc, argv);
  CLI::App app{"word-level LSTM language models with transfer-learning personalization"};
  app.require_subcommand(1);

  BuildVocabCmd build_vocab;
  {
    auto* c = app.add_subcommand("build-vocab", "build a frequency-ranked vocabulary");
    build_vocab.data.attach(*c);
    c->add_option("--max-size", build_vocab.max_size, "vocabulary capacity incl. reserved tokens");
    add_out_flags(*c, build_vocab.out_dir, build_vocab.out, "vocabulary file path");
    c->callback([&] { build_vocab.run(); });
  }

  PretrainCmd pretrain;
  {
    auto* c = app.add_subcommand("pretrain", "train a model from scratch on general data");
    pretrain.data.attach(*c);
    pretrain.tf.attach(*c);
    c->add_option("--task", pretrain.task, "sentence or reply")
        ->check(CLI::IsMember({"sentence", "reply"}));
    c->add_option("--vocab", pretrain.vocab_path, "vocabulary file")->required();
    c->add_option("--embed-dim", pretrain.embed_dim, "embedding width");
    c->add_option("--hidden", pretrain.hidden, "LSTM layer widths")->delimiter(',');
    add_out_flags(*c, pretrain.out_dir, pretrain.out, "checkpoint path");
    c->add_option("--metrics", pretrain.metrics, "per-epoch metrics CSV path");
    c->callback([&] { pretrain.run(); });
  }

  FinetuneCmd finetune;
  {
    auto* c = app.add_subcommand("finetune", "personalize a pretrained model");
    finetune.data.attach(*c);
    finetune.tf.attach(*c);
    finetune.scheme.attach(*c);
    c->add_option("--model", finetune.model_path, "general checkpoint")->required();
    c->add_option("--vocab", finetune.vocab_path, "vocabulary file")->required();
    c->add_flag("--cast", finetune.cast, "allow loading a checkpoint of the other precision");
    add_out_flags(*c, finetune.out_dir, finetune.out, "checkpoint path");
    c->add_option("--metrics", finetune.metrics, "per-epoch metrics CSV path");
    c->callback([&] { finetune.run(); });
  }

  GenerateCmd generate;
  {
    auto* c = app.add_subcommand("generate", "complete sentences or reply to messages");
    generate.decode.attach(*c);
    c->add_option("--model", generate.model_path, "checkpoint")->required();
    c->add_option("--vocab", generate.vocab_path, "vocabulary file")->required();
    c->add_option("--input", generate.input_file, "prompts, one per line");
    c->add_option("--text", generate.texts, "inline prompt (repeatable)");
    add_out_flags(*c, generate.out_dir, generate.out, "generations path");
    c->callback([&] { generate.run(); });
  }

  EvalPplCmd eval_ppl;
  {
    auto* c = app.add_subcommand("eval-ppl", "perplexity of a model on a dataset");
    eval_ppl.data.attach(*c);
    c->add_option("--model", eval_ppl.model_path, "checkpoint")->required();
    c->add_option("--vocab", eval_ppl.vocab_path, "vocabulary file")->required();
    add_out_flags(*c, eval_ppl.out_dir, eval_ppl.out, "perplexity CSV path");
    c->callback([&] { eval_ppl.run(); });
  }

  EvalStyleCmd eval_style;
  {
    auto* c = app.add_subcommand("eval-style", "word-distribution cross entropy of two corpora");
    c->add_option("--candidate", eval_style.candidate_file, "corpus being scored")->required();
    c->add_option("--target", eval_style.target_file, "reference corpus")->required();
    c->add_option("--vocab", eval_style.vocab_path, "vocabulary file")->required();
    c->add_option("--epsilon", eval_style.epsilon, "smoothing for zero-probability words");
    add_out_flags(*c, eval_style.out_dir, eval_style.out, "style CSV path");
    c->callback([&] { eval_style.run(); });
  }

  SimilarityCmd similarity;
  {
    auto* c = app.add_subcommand("similarity-matrix",
                                 "pairwise style cross entropy between labeled corpora");
    c->add_option("--corpus", similarity.labeled, "LABEL=FILE (repeatable)")->required();
    c->add_option("--vocab", similarity.vocab_path, "vocabulary file")->required();
    c->add_option("--epsilon", similarity.epsilon, "smoothing for zero-probability words");
    c->add_option("--seed", similarity.seed, "diagonal half-split seed");
    add_out_flags(*c, similarity.out_dir, similarity.out, "matrix CSV path");
    c->callback([&] { similarity.run(); });
  }

  SizeSweepCmd sweep;
  {
    auto* c = app.add_subcommand("size-sweep", "fine-tune on nested persona subsets");
    sweep.data.attach(*c);
    sweep.tf.attach(*c);
    sweep.scheme.attach(*c);
    c->add_option("--model", sweep.model_path, "general checkpoint")->required();
    c->add_option("--vocab", sweep.vocab_path, "vocabulary file")->required();
    c->add_option("--sizes", sweep.sizes, "subset sizes, ascending; 0 = untouched model")
        ->delimiter(',')
        ->required();
    c->add_flag("--cast", sweep.cast, "allow loading a checkpoint of the other precision");
    add_out_flags(*c, sweep.out_dir, sweep.out, "sweep CSV path");
    c->callback([&] { sweep.run(); });
  }

  ConvergenceCmd convergence;
  {
    auto* c = app.add_subcommand("style-convergence",
                                 "style cross entropy of generated replies across fine-tuning");
    convergence.data.attach(*c);
    convergence.tf.attach(*c);
    convergence.scheme.attach(*c);
    convergence.decode.attach(*c);
    c->add_option("--model", convergence.model_path, "general reply checkpoint")->required();
    c->add_option("--vocab", convergence.vocab_path, "vocabulary file")->required();
    c->add_option("--messages", convergence.messages_file, "test messages, one per line")
        ->required();
    c->add_option("--target", convergence.targets, "LABEL=FILE target corpus (repeatable)")
        ->required();
    c->add_option("--probe-epochs", convergence.probe_epochs, "epochs to pause and score at")
        ->delimiter(',')
        ->required();
    c->add_option("--epsilon", convergence.epsilon, "smoothing for zero-probability words");
    c->add_flag("--cast", convergence.cast, "allow loading a checkpoint of the other precision");
    add_out_flags(*c, convergence.out_dir, convergence.out, "convergence CSV path");
    c->callback([&] { convergence.run(); });
  }

  NgramTrainCmd ngram_train;
  {
    auto* c = app.add_subcommand("ngram-train", "estimate a smoothed n-gram model");
    ngram_train.data.attach(*c);
    c->add_option("--vocab", ngram_train.vocab_path, "vocabulary file")->required();
    c->add_option("--order", ngram_train.order, "n-gram order");
    add_out_flags(*c, ngram_train.out_dir, ngram_train.out, "model path");
    c->callback([&] { ngram_train.run(); });
  }

  NgramPplCmd ngram_ppl;
  {
    auto* c = app.add_subcommand("ngram-ppl", "perplexity of an n-gram model on a dataset");
    ngram_ppl.data.attach(*c);
    c->add_option("--model", ngram_ppl.model_path, "n-gram model file")->required();
    c->add_option("--vocab", ngram_ppl.vocab_path, "vocabulary file")->required();
    add_out_flags(*c, ngram_ppl.out_dir, ngram_ppl.out, "perplexity CSV path");
    c->callback([&] { ngram_ppl.run(); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {  // data, shape, io
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
