#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sparselda/corpus.hpp"
#include "support/fixtures.hpp"

#ifndef SPARSELDA_CLI_PATH
#error "SPARSELDA_CLI_PATH must point at the built binary"
#endif

namespace {

struct CommandResult {
    int exit_code;
    std::string stdout_text;
};

CommandResult run_cli(const std::string& args, const std::filesystem::path& capture_dir) {
    static int counter = 0;
    const auto out_file = capture_dir / ("stdout_" + std::to_string(counter++) + ".txt");
    const std::string command = std::string(SPARSELDA_CLI_PATH) + " " + args + " > " +
                                out_file.string() + " 2>&1";
    const int raw = std::system(command.c_str());
    CommandResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    result.stdout_text = testsupport::read_file(out_file);
    return result;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

struct CliFixture {
    testsupport::TempDir tmp;
    std::filesystem::path docword;
    std::filesystem::path vocab;
    std::filesystem::path heldout;

    CliFixture() {
        const sparselda::Corpus corpus = testsupport::random_corpus(40, 25, 12.0, 1001);
        const sparselda::Corpus heldout_corpus = testsupport::random_corpus(8, 25, 10.0, 1002);
        docword = tmp.path() / "docword.txt";
        vocab = tmp.path() / "vocab.txt";
        heldout = tmp.path() / "heldout.txt";
        testsupport::write_uci(corpus, docword, vocab);
        const auto heldout_vocab = tmp.path() / "heldout_vocab.txt";
        testsupport::write_uci(heldout_corpus, heldout, heldout_vocab);
    }

    std::string train_args(const std::string& out_dir, const std::string& extra = "") const {
        return "train --docword " + docword.string() + " --vocab " + vocab.string() +
               " --topics 5 --iters 4 --seed 77 --workers 2 --out " +
               (tmp.path() / out_dir).string() + (extra.empty() ? "" : " " + extra);
    }
};

}  // namespace

TEST_CASE("train writes metrics, manifest and checkpoint") {
    CliFixture fx;
    const auto result = run_cli(fx.train_args("run1"), fx.tmp.path());
    REQUIRE(result.exit_code == 0);

    const auto metrics = lines_of(testsupport::read_file(fx.tmp.path() / "run1/metrics.log"));
    CHECK(metrics.size() == 4);  // one line per iteration
    for (const auto& line : metrics) {
        std::istringstream fields(line);
        std::uint32_t iter;
        double elapsed, throughput;
        CHECK(static_cast<bool>(fields >> iter >> elapsed >> throughput));
    }
    CHECK(std::filesystem::exists(fx.tmp.path() / "run1/manifest.json"));
    CHECK(std::filesystem::exists(fx.tmp.path() / "run1/model.ckpt"));
}

TEST_CASE("default alpha is recorded as 50 over K in the manifest") {
    CliFixture fx;
    const std::string args = "train --docword " + fx.docword.string() + " --vocab " +
                             fx.vocab.string() +
                             " --topics 1000 --iters 0 --chunks 1 --seed 5 --out " +
                             (fx.tmp.path() / "alpha_run").string();
    const auto result = run_cli(args, fx.tmp.path());
    REQUIRE(result.exit_code == 0);
    const std::string manifest = testsupport::read_file(fx.tmp.path() / "alpha_run/manifest.json");
    CHECK(manifest.find("\"alpha\": 0.05") != std::string::npos);
    CHECK(manifest.find("\"seed\": 5") != std::string::npos);
}

TEST_CASE("reruns with the same seed produce byte-identical checkpoints") {
    CliFixture fx;
    REQUIRE(run_cli(fx.train_args("run_a"), fx.tmp.path()).exit_code == 0);
    REQUIRE(run_cli(fx.train_args("run_b"), fx.tmp.path()).exit_code == 0);
    CHECK(testsupport::read_file(fx.tmp.path() / "run_a/model.ckpt") ==
          testsupport::read_file(fx.tmp.path() / "run_b/model.ckpt"));

    // Replaying from the manifest reproduces the run as well.
    const std::string replay = "train --from-manifest " +
                               (fx.tmp.path() / "run_a/manifest.json").string() + " --out " +
                               (fx.tmp.path() / "run_c").string();
    REQUIRE(run_cli(replay, fx.tmp.path()).exit_code == 0);
    CHECK(testsupport::read_file(fx.tmp.path() / "run_a/model.ckpt") ==
          testsupport::read_file(fx.tmp.path() / "run_c/model.ckpt"));
}

TEST_CASE("eval reports a reproducible held-out line") {
    CliFixture fx;
    REQUIRE(run_cli(fx.train_args("run_eval"), fx.tmp.path()).exit_code == 0);
    const std::string model = (fx.tmp.path() / "run_eval/model.ckpt").string();

    const auto first =
        run_cli("eval --model " + model + " --heldout " + fx.heldout.string(), fx.tmp.path());
    REQUIRE(first.exit_code == 0);
    const auto second =
        run_cli("eval --model " + model + " --heldout " + fx.heldout.string(), fx.tmp.path());
    REQUIRE(second.exit_code == 0);
    CHECK(first.stdout_text == second.stdout_text);

    std::istringstream fields(first.stdout_text);
    std::uint32_t iteration = 0;
    double ll = 1.0;
    std::uint64_t tokens = 0;
    REQUIRE(static_cast<bool>(fields >> iteration >> ll >> tokens));
    CHECK(iteration == 4);
    CHECK(ll < 0.0);
    CHECK(tokens > 0);
}

TEST_CASE("topics output parses back into n entries per topic") {
    CliFixture fx;
    REQUIRE(run_cli(fx.train_args("run_topics"), fx.tmp.path()).exit_code == 0);
    const std::string model = (fx.tmp.path() / "run_topics/model.ckpt").string();

    const auto result = run_cli("topics --model " + model + " --top-n 4 --vocab " +
                                fx.vocab.string(), fx.tmp.path());
    REQUIRE(result.exit_code == 0);
    const auto lines = lines_of(result.stdout_text);
    REQUIRE(lines.size() == 5);
    for (const auto& line : lines) {
        CHECK(line.rfind("topic ", 0) == 0);
        CHECK(std::count(line.begin(), line.end(), ':') == 5);  // topic label + 4 words
    }

    // --top-n 0 still prints one line per topic.
    const auto empty = run_cli("topics --model " + model + " --top-n 0", fx.tmp.path());
    REQUIRE(empty.exit_code == 0);
    CHECK(lines_of(empty.stdout_text).size() == 5);

    // n beyond V is a validation failure.
    const auto too_many = run_cli("topics --model " + model + " --top-n 26", fx.tmp.path());
    CHECK(too_many.exit_code == 1);
}

TEST_CASE("exit codes distinguish validation from io failures") {
    CliFixture fx;
    const auto bad_topics = run_cli(
        "train --docword " + fx.docword.string() + " --vocab " + fx.vocab.string() +
            " --topics 0 --iters 1 --out " + (fx.tmp.path() / "bad").string(),
        fx.tmp.path());
    CHECK(bad_topics.exit_code == 1);

    const auto missing_file = run_cli(
        "train --docword /nonexistent/docword.txt --vocab " + fx.vocab.string() +
            " --topics 3 --out " + (fx.tmp.path() / "bad2").string(),
        fx.tmp.path());
    CHECK(missing_file.exit_code == 2);

    const auto missing_model = run_cli(
        "eval --model /nonexistent/model.ckpt --heldout " + fx.heldout.string(), fx.tmp.path());
    CHECK(missing_model.exit_code == 2);
}
