// Exercises the shared library through its C header only, plus the CLI binary.

#include <cytoclip/cytoclip.h>

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path path;
    Scratch() {
        path = fs::temp_directory_path() / ("cytoclip_capi_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

const char* kSmall = R"({"seed": 3, "synth": {"sections": 3}, "train": {"epochs": 3}})";

int cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" CYTOCLIP_CLI "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("status names, errors and version") {
    CHECK(std::string(cyto_status_name(CYTO_OK)) == "ok");
    CHECK(std::string(cyto_version()).size() > 0);
    cyto_config* cfg = nullptr;
    CHECK(cyto_config_parse("{\"bogus\": 1}", ".", &cfg) == CYTO_ERR_PARSE);
    CHECK(cfg == nullptr);
    CHECK(std::string(cyto_last_error()).find("bogus") != std::string::npos);
    CHECK(cyto_config_parse("not json", ".", &cfg) == CYTO_ERR_PARSE);
    CHECK(cyto_config_load("/nonexistent.json", &cfg) != CYTO_OK);
    CHECK(cyto_config_default(nullptr) == CYTO_ERR_INVALID_ARGUMENT);
}

TEST_CASE("config handle") {
    cyto_config* cfg = nullptr;
    REQUIRE(cyto_config_default(&cfg) == CYTO_OK);
    CHECK(cyto_config_set_seed(cfg, 42) == CYTO_OK);
    CHECK(cyto_config_set_jobs(cfg, 0) == CYTO_ERR_INVALID_ARGUMENT);
    char* text = nullptr;
    REQUIRE(cyto_config_to_json(cfg, &text) == CYTO_OK);
    CHECK(std::string(text).find("\"seed\": 42") != std::string::npos);
    cyto_string_free(text);
    cyto_config_free(cfg);
}

TEST_CASE("taxonomy handle") {
    cyto_taxonomy* t = nullptr;
    REQUIRE(cyto_taxonomy_load(CYTOCLIP_TEST_DATA_DIR "/taxonomy_demo.json", CYTOCLIP_TEST_DATA_DIR "/policy_default.json",
                               &t) == CYTO_OK);
    char* label = nullptr;
    REQUIRE(cyto_taxonomy_resolve(t, "caudate", &label) == CYTO_OK);
    CHECK(std::string(label) == "Basal nuclei");
    cyto_string_free(label);
    CHECK(cyto_taxonomy_resolve(t, "lateral_ventricle", &label) == CYTO_OK);
    CHECK(label == nullptr);
    CHECK(cyto_taxonomy_resolve(t, "nope", &label) == CYTO_ERR_INVALID_ARGUMENT);
    size_t n = 0;
    CHECK(cyto_taxonomy_label_count(t, &n) == CYTO_OK);
    CHECK(n == 28);
    CHECK(cyto_taxonomy_max_depth(t, &n) == CYTO_OK);
    CHECK(n == 8);
    cyto_taxonomy_free(t);
    CHECK(cyto_taxonomy_load("/missing.json", CYTOCLIP_TEST_DATA_DIR "/policy_default.json", &t) == CYTO_ERR_IO);
}

TEST_CASE("numeric entry points") {
    const double eye[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double loss = 0;
    REQUIRE(cyto_symmetric_ce_loss(eye, 3, 1.0, &loss) == CYTO_OK);
    CHECK(std::abs(loss - 0.551445) < 1e-6);
    CHECK(cyto_symmetric_ce_loss(eye, 0, 1.0, &loss) != CYTO_OK);

    const double img[4] = {1, 0.2, -0.3, 1}, txt[4] = {0.9, 0.1, 0.1, 1.2};
    double di[4], dt[4], dl = 0;
    REQUIRE(cyto_loss_gradients(img, txt, 2, 2, 1.0, &loss, di, dt, &dl) == CYTO_OK);
    CHECK(std::isfinite(dl));

    const char* ql[] = {"a", "b"};
    const char* cl[] = {"b", "a"};
    const double q[4] = {1, 0, 0, 1}, c[4] = {0, 1, 1, 0};
    double r = 0;
    size_t counted = 0, without = 0;
    REQUIRE(cyto_recall_at_k(q, 2, c, 2, 2, ql, cl, 1, 0, &r, &counted, &without) == CYTO_OK);
    CHECK(r == 1.0);
    CHECK(counted == 2);
}

TEST_CASE("stages through the C API") {
    Scratch dir;
    cyto_config* cfg = nullptr;
    REQUIRE(cyto_config_parse(kSmall, dir.path.c_str(), &cfg) == CYTO_OK);
    size_t n = 0;
    REQUIRE(cyto_run_synth(cfg, (dir / "sections").c_str(), &n) == CYTO_OK);
    CHECK(n == 3);
    REQUIRE(cyto_run_prep_regions(cfg, (dir / "sections").c_str(), (dir / "regions").c_str(), &n) == CYTO_OK);
    CHECK(n > 0);
    cyto_split_summary split{};
    REQUIRE(cyto_run_split(cfg, (dir / "regions/manifest.jsonl").c_str(), (dir / "split").c_str(), &split) == CYTO_OK);
    CHECK(split.train + split.val == n);
    cyto_train_summary train{};
    REQUIRE(cyto_run_train_toy(cfg, (dir / "split/train.jsonl").c_str(), (dir / "model").c_str(), &train) == CYTO_OK);
    CHECK(train.epochs == 3);
    cyto_classify_summary cls{};
    REQUIRE(cyto_run_eval_classify(cfg, (dir / "model/model.ckpt").c_str(), (dir / "split/val.jsonl").c_str(),
                                   (dir / "split/train.jsonl").c_str(), (dir / "eval").c_str(), &cls) == CYTO_OK);
    CHECK(cls.samples == split.val);
    cyto_retrieval_summary ret{};
    REQUIRE(cyto_run_eval_retrieval(cfg, (dir / "model/model.ckpt").c_str(), (dir / "split/val.jsonl").c_str(),
                                    (dir / "ret").c_str(), &ret) == CYTO_OK);
    CHECK(ret.count == 3);
    CHECK(cyto_run_split(cfg, (dir / "missing.jsonl").c_str(), (dir / "x").c_str(), &split) != CYTO_OK);
    cyto_config_free(cfg);
}

TEST_CASE("command line") {
    Scratch dir;
    std::ofstream(dir / "cfg.json") << kSmall;
    std::ofstream(dir / "bad.json") << "{\"no_such_key\": true}";
    const std::string out = " --out-dir \"" + dir.path.string() + "\"";
    const std::string cfg = " --config \"" + (dir / "cfg.json") + "\"";

    CHECK(cli("") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("--help") == 0);
    CHECK(cli("split" + out) == 2);  // required option missing
    CHECK(cli("--config \"" + (dir / "bad.json") + "\" synth" + out) == 2);
    CHECK(cli("split --manifest \"" + (dir / "missing.jsonl") + "\"" + out) == 1);

    CHECK(cli("parse-taxonomy" + out + "/tax") == 0);
    CHECK(fs::exists(dir.path / "tax/taxonomy_summary.json"));
    // config taken from the environment when --config is absent
    CHECK(cli("synth" + out + "/sections", "CYTOCLIP_CONFIG=\"" + (dir / "cfg.json") + "\"") == 0);
    CHECK(fs::exists(dir.path / "sections/section_002.geojson"));
    CHECK(cli("prep-regions --sections \"" + (dir / "sections") + "\"" + cfg + out + "/regions") == 0);
    CHECK(cli("split --manifest \"" + (dir / "regions/manifest.jsonl") + "\"" + cfg + out + "/split") == 0);
    CHECK(cli("train-toy --manifest \"" + (dir / "split/train.jsonl") + "\"" + cfg + out + "/model") == 0);
    CHECK(cli("eval-classify --checkpoint \"" + (dir / "model/model.ckpt") + "\" --manifest \"" +
              (dir / "split/val.jsonl") + "\"" + cfg + out + "/eval") == 0);
    CHECK(fs::exists(dir.path / "eval/classify_report.json"));
    CHECK_FALSE(fs::exists(dir.path / "eval/.incomplete"));
}
