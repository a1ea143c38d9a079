#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparselda/corpus.hpp"
#include "sparselda/eval.hpp"
#include "sparselda/parallel.hpp"
#include "sparselda/trainer.hpp"
#include "sparselda/types.hpp"

namespace {

using nlohmann::json;
using namespace sparselda;

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::uint64_t hash = 1469598103934665603ull;  // FNV-1a 64
    char buffer[1 << 16];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 1099511628211ull;
        }
        if (!in) break;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "0x%016llx", static_cast<unsigned long long>(hash));
    return out;
}

Corpus load_corpus_files(const std::string& docword_path, const std::string& vocab_path) {
    std::ifstream docword(docword_path);
    if (!docword) throw IoError("cannot open docword file " + docword_path);
    std::ifstream vocab(vocab_path);
    if (!vocab) throw IoError("cannot open vocab file " + vocab_path);
    return load_uci(docword, vocab);
}

Corpus load_docword_file(const std::string& path) {
    std::ifstream docword(path);
    if (!docword) throw IoError("cannot open docword file " + path);
    return load_docword(docword);
}

std::vector<std::string> load_vocab_file(const std::string& path, std::uint32_t expected) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab file " + path);
    std::vector<std::string> vocab;
    std::string term;
    while (std::getline(in, term)) {
        if (!term.empty() && term.back() == '\r') term.pop_back();
        vocab.push_back(term);
    }
    if (vocab.size() != expected) {
        throw ValidationError("vocab file has " + std::to_string(vocab.size()) +
                              " entries, model expects " + std::to_string(expected));
    }
    return vocab;
}

struct TrainArgs {
    std::string docword;
    std::string vocab;
    std::string heldout;
    std::string out_dir = "run";
    std::string manifest_path;
    std::string sampler = "sparse";
    std::uint32_t topics = 0;
    double alpha = 0.0;
    double beta = 0.01;
    std::uint32_t iters = 100;
    std::uint32_t chunks = 0;
    unsigned workers = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::uint64_t mem_budget = 1ull << 30;
    std::uint32_t eval_every = 1;
    std::uint32_t burn_in = 20;
};

void apply_manifest_defaults(const CLI::App* cmd, TrainArgs& args) {
    std::ifstream in(args.manifest_path);
    if (!in) throw IoError("cannot open manifest " + args.manifest_path);
    json manifest;
    in >> manifest;
    const json& cfg = manifest.at("config");
    const json& inputs = manifest.at("inputs");
    const auto take = [&](const char* flag, auto& slot, const json& source, const char* key) {
        if (cmd->count(flag) == 0 && source.contains(key) && !source.at(key).is_null()) {
            source.at(key).get_to(slot);
        }
    };
    take("--docword", args.docword, inputs.at("docword"), "path");
    take("--vocab", args.vocab, inputs.at("vocab"), "path");
    if (inputs.contains("heldout") && !inputs.at("heldout").is_null()) {
        take("--heldout", args.heldout, inputs.at("heldout"), "path");
    }
    take("--topics", args.topics, cfg, "topics");
    take("--alpha", args.alpha, cfg, "alpha");
    take("--beta", args.beta, cfg, "beta");
    take("--iters", args.iters, cfg, "iters");
    take("--chunks", args.chunks, cfg, "chunks");
    take("--workers", args.workers, cfg, "workers");
    take("--mem-budget", args.mem_budget, cfg, "mem_budget");
    take("--eval-every", args.eval_every, cfg, "eval_every");
    take("--burn-in", args.burn_in, cfg, "burn_in");
    take("--sampler", args.sampler, cfg, "sampler");
    if (cmd->count("--seed") == 0 && cfg.contains("seed")) {
        args.seed = cfg.at("seed").get<std::uint64_t>();
        args.seed_given = true;
    }
}

int run_train(const CLI::App* cmd, TrainArgs& args) {
    if (!args.manifest_path.empty()) apply_manifest_defaults(cmd, args);
    if (args.docword.empty() || args.vocab.empty()) {
        throw ValidationError("train requires --docword and --vocab");
    }
    if (!args.seed_given) {
        std::random_device rd;
        args.seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    }

    const Corpus corpus = load_corpus_files(args.docword, args.vocab);

    TrainConfig cfg;
    cfg.num_topics = args.topics;
    cfg.alpha = args.alpha;
    cfg.beta = args.beta;
    cfg.iterations = args.iters;
    cfg.num_chunks = args.chunks;
    cfg.num_workers = args.workers;
    cfg.seed = args.seed;
    cfg.memory_budget = args.mem_budget;
    cfg.eval_every = args.eval_every;
    if (args.sampler == "sparse") {
        cfg.sampler = SamplerKind::kSparse;
    } else if (args.sampler == "vanilla") {
        cfg.sampler = SamplerKind::kVanilla;
    } else {
        throw ValidationError("--sampler must be sparse or vanilla");
    }
    const TrainConfig resolved = cfg.resolved(corpus);

    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path out_dir(args.out_dir);

    json manifest;
    manifest["artifact_version"] = kVersion;
    manifest["command"] = "train";
    manifest["config"] = {{"topics", resolved.num_topics},
                          {"alpha", resolved.alpha},
                          {"beta", resolved.beta},
                          {"iters", resolved.iterations},
                          {"chunks", resolved.num_chunks},
                          {"workers", resolved.num_workers},
                          {"seed", resolved.seed},
                          {"mem_budget", resolved.memory_budget},
                          {"eval_every", resolved.eval_every},
                          {"burn_in", args.burn_in},
                          {"sampler", args.sampler}};
    manifest["inputs"] = {{"docword", {{"path", args.docword}, {"digest", file_digest(args.docword)}}},
                          {"vocab", {{"path", args.vocab}, {"digest", file_digest(args.vocab)}}}};
    if (!args.heldout.empty()) {
        manifest["inputs"]["heldout"] = {{"path", args.heldout},
                                         {"digest", file_digest(args.heldout)}};
    } else {
        manifest["inputs"]["heldout"] = nullptr;
    }
    {
        std::ofstream out(out_dir / "manifest.json");
        if (!out) throw IoError("cannot write manifest in " + args.out_dir);
        out << manifest.dump(2) << '\n';
    }

    std::optional<HeldoutSet> heldout;
    if (!args.heldout.empty()) {
        const Corpus heldout_corpus = load_docword_file(args.heldout);
        if (heldout_corpus.vocab_size != corpus.vocab_size) {
            throw ValidationError("held-out vocabulary size differs from training corpus");
        }
        heldout = HeldoutSet::from_corpus(heldout_corpus);
    }

    std::ofstream metrics(out_dir / "metrics.log", std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics log in " + args.out_dir);
    const MetricsSink sink = [&metrics](const MetricsEntry& entry) {
        metrics << format_metrics_line(entry) << '\n';
        metrics.flush();
    };
    HeldoutProbe probe;
    if (heldout) {
        probe = [&](ModelState& model) {
            return heldout_ll(model, *heldout, args.burn_in, resolved.num_workers, resolved.seed)
                .per_token_ll;
        };
    }

    ModelState state = train(corpus, resolved, sink, probe);
    save_checkpoint(out_dir / "model.ckpt", state);
    std::cout << "trained " << state.num_tokens << " tokens, K=" << state.num_topics << ", "
              << resolved.iterations << " iterations -> " << (out_dir / "model.ckpt").string()
              << '\n';
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string heldout;
    std::uint32_t burn_in = 20;
    unsigned workers = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_eval(const EvalArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.model);
    ModelState model = model_from_checkpoint(ckpt, args.workers);
    const Corpus heldout_corpus = load_docword_file(args.heldout);
    if (heldout_corpus.vocab_size != model.vocab_size) {
        throw ValidationError("held-out vocabulary size differs from model");
    }
    const HeldoutSet heldout = HeldoutSet::from_corpus(heldout_corpus);
    const std::uint64_t seed = args.seed_given ? args.seed : ckpt.seed;
    const EvalReport report =
        heldout_ll(model, heldout, args.burn_in, resolve_workers(args.workers), seed);
    std::cout << format_eval_line(report) << '\n';
    return 0;
}

struct TopicsArgs {
    std::string model;
    std::string vocab;
    std::uint32_t top_n = 10;
};

int run_topics(const TopicsArgs& args) {
    const Checkpoint ckpt = load_checkpoint(args.model);
    const WordTopicProb bhat = preprocess(ckpt.word_topic, ckpt.beta);
    std::vector<std::string> vocab;
    if (!args.vocab.empty()) vocab = load_vocab_file(args.vocab, ckpt.vocab_size);
    print_topics(std::cout, bhat, vocab, args.top_n);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparsity-aware LDA trainer"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a topic model");
    train_cmd->add_option("--docword", train_args.docword, "UCI bag-of-words docword file")
        ->envname("SPARSELDA_DOCWORD");
    train_cmd->add_option("--vocab", train_args.vocab, "Vocabulary file, one term per line")
        ->envname("SPARSELDA_VOCAB");
    train_cmd->add_option("--topics", train_args.topics, "Number of topics K");
    train_cmd->add_option("--alpha", train_args.alpha, "Doc-topic smoothing (default 50/K)");
    train_cmd->add_option("--beta", train_args.beta, "Word-topic smoothing")->capture_default_str();
    train_cmd->add_option("--iters", train_args.iters, "Training iterations")->capture_default_str();
    train_cmd->add_option("--chunks", train_args.chunks, "Chunk count (0 = auto from --mem-budget)");
    train_cmd->add_option("--workers", train_args.workers, "Worker threads (0 = hardware)")
        ->envname("SPARSELDA_WORKERS");
    CLI::Option* seed_opt =
        train_cmd->add_option("--seed", train_args.seed, "RNG seed (generated when absent)")
            ->envname("SPARSELDA_SEED");
    train_cmd->add_option("--heldout", train_args.heldout, "Held-out docword file");
    train_cmd->add_option("--eval-every", train_args.eval_every,
                          "Iterations between held-out evaluations")->capture_default_str();
    train_cmd->add_option("--burn-in", train_args.burn_in, "Held-out burn-in sweeps")->capture_default_str();
    train_cmd->add_option("--out", train_args.out_dir, "Output directory")->capture_default_str()
        ->envname("SPARSELDA_OUT");
    train_cmd->add_option("--mem-budget", train_args.mem_budget, "Chunk memory budget in bytes")->capture_default_str()
        ->envname("SPARSELDA_MEM_BUDGET");
    train_cmd->add_option("--sampler", train_args.sampler, "sparse | vanilla")->capture_default_str();
    train_cmd->add_option("--from-manifest", train_args.manifest_path,
                          "Reproduce a run from its manifest");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Held-out log-likelihood of a checkpoint");
    eval_cmd->add_option("--model", eval_args.model, "Checkpoint file")->required();
    eval_cmd->add_option("--heldout", eval_args.heldout, "Held-out docword file")->required();
    eval_cmd->add_option("--burn-in", eval_args.burn_in, "Burn-in sweeps")->capture_default_str();
    eval_cmd->add_option("--workers", eval_args.workers, "Worker threads (0 = hardware)")
        ->envname("SPARSELDA_WORKERS");
    CLI::Option* eval_seed_opt =
        eval_cmd->add_option("--seed", eval_args.seed, "RNG seed (default: checkpoint seed)");

    TopicsArgs topics_args;
    CLI::App* topics_cmd = app.add_subcommand("topics", "Top words per topic");
    topics_cmd->add_option("--model", topics_args.model, "Checkpoint file")->required();
    topics_cmd->add_option("--top-n", topics_args.top_n, "Words per topic")->capture_default_str();
    topics_cmd->add_option("--vocab", topics_args.vocab, "Vocabulary file for surface forms");

    try {
        app.parse(argc, argv);
        train_args.seed_given = seed_opt->count() > 0;
        eval_args.seed_given = eval_seed_opt->count() > 0;
        if (train_cmd->parsed()) return run_train(train_cmd, train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (topics_cmd->parsed()) return run_topics(topics_args);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const sparselda::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const sparselda::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
