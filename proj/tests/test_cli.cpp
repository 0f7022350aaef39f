// Spawns the eopt binary (path in EOPT_BIN) and checks the CLI contracts.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"
#include "eopt/common.hpp"
#include "eopt/dataset.hpp"
#include "eopt/dates.hpp"
#include "eopt/forecast.hpp"

using namespace eopt;

namespace {

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

std::string binary_path() {
    const char* env = std::getenv("EOPT_BIN");
    REQUIRE_MESSAGE(env != nullptr, "EOPT_BIN must point at the eopt binary");
    return env;
}

RunResult run(const std::string& args) {
    const std::string cmd = binary_path() + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string output;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) output += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const std::string kDir = "/tmp/eopt_cli_test";

struct TempDir {
    TempDir() {
        const int rc = std::system(("rm -rf " + kDir + " && mkdir -p " + kDir).c_str());
        REQUIRE(rc == 0);
    }
};

}  // namespace

TEST_CASE("missing required flags exit with code 2 and a usage message") {
    const RunResult r = run("gen-data --pixels 4");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("--out") != std::string::npos);
    CHECK(r.output.find("usage") != std::string::npos);
}

TEST_CASE("unknown subcommands and flags exit with code 2") {
    CHECK(run("frobnicate").exit_code == 2);
    CHECK(run("gen-data --out /tmp/x.eopt --bogus 3").exit_code == 2);
}

TEST_CASE("gen-data date arithmetic and determinism") {
    TempDir tmp;
    const std::string out = kDir + "/d.eopt";
    const RunResult r = run("gen-data --pixels 16 --start 2015-01-01 --end 2015-06-30 "
                            "--cadence 5 --seed 7 --out " + out);
    CHECK(r.exit_code == 0);

    const TokenizedDataset ds = read_dataset(out);
    // oracle: number of cadence dates in the inclusive ISO range
    const int64_t span = parse_iso_date("2015-06-30") - parse_iso_date("2015-01-01");
    CHECK(ds.n_time == span / 5 + 1);
    CHECK(ds.n_index == 16);
    CHECK(ds.dates.front() == 0);

    const std::string bytes_a = slurp(out);
    const RunResult r2 = run("gen-data --pixels 16 --start 2015-01-01 --end 2015-06-30 "
                             "--cadence 5 --seed 7 --out " + out);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(out) == bytes_a);

    // labels sidecar and manifest exist
    CHECK(!slurp(out + ".labels").empty());
    const std::string manifest = slurp(out + ".manifest");
    CHECK(manifest.find("subcommand = gen-data") != std::string::npos);
    CHECK(manifest.find("dataset_checksum") != std::string::npos);
}

TEST_CASE("manifest replays through --config") {
    TempDir tmp;
    const std::string out = kDir + "/replay.eopt";
    CHECK(run("gen-data --pixels 8 --start 2015-01-01 --end 2015-03-01 --seed 3 --out " + out)
              .exit_code == 0);
    const std::string bytes = slurp(out);
    const RunResult replay = run("gen-data --config " + out + ".manifest");
    CHECK(replay.exit_code == 0);
    CHECK(slurp(out) == bytes);
}

TEST_CASE("size arithmetic lines") {
    RunResult r = run("size --params 700e6");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "14.0e9 tokens\n");

    r = run("size --tokens 1e15");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "5.0e13 params\n");

    CHECK(run("size --params 0").exit_code == 2);
    CHECK(run("size").exit_code == 2);
    CHECK(run("size --params 1 --tokens 1").exit_code == 2);
}

TEST_CASE("emissions arithmetic lines") {
    RunResult r = run("emissions --kwh 145 --intensity 0.193");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "28.0 kgCO2eq\n");

    r = run("emissions --kwh 0 --intensity 0.5");
    CHECK(r.output == "0 kgCO2eq\n");

    r = run("emissions --kwh 1000 --intensity 0.5");
    CHECK(r.output == "500 kgCO2eq\n");

    CHECK(run("emissions --intensity 0.2").exit_code == 2);
}

TEST_CASE("mini pipeline: train, forecast, baseline, evaluate, embed") {
    TempDir tmp;
    const std::string data = kDir + "/p.eopt";
    CHECK(run("gen-data --pixels 12 --start 2015-01-01 --end 2017-12-30 --seed 11 --out " + data)
              .exit_code == 0);

    const std::string ckpt = kDir + "/m.eock";
    // a misspelled flag must fail cleanly before any work happens
    CHECK(run("train --data " + data + " --out " + ckpt + " --stepz 40").exit_code == 2);

    const RunResult train_ok =
        run("train --data " + data + " --out " + ckpt +
            " --preset toy-32 --block 16 --steps 40 --tokens-per-step 64 --max-lr 2e-3 "
            "--seed 2 --log-every 10");
    CHECK(train_ok.exit_code == 0);
    CHECK(!slurp(ckpt).empty());
    const std::string log = slurp(ckpt + ".loss.csv");
    CHECK(log.rfind("step,tokens,train_loss,val_loss,lr,seconds", 0) == 0);

    const std::string fc = kDir + "/fc.csv";
    CHECK(run("forecast --data " + data + " --checkpoint " + ckpt +
              " --divergence 2017-10-01 --horizon 8 --pixels 0:4 --out " + fc)
              .exit_code == 0);
    CHECK(run("forecast --data " + data + " --checkpoint " + ckpt +
              " --divergence 2017-10-01 --horizon 0 --pixels 0:4 --out " + fc)
              .exit_code == 2);

    const std::string base = kDir + "/base.csv";
    CHECK(run("baseline --data " + data +
              " --divergence 2017-10-01 --horizon 8 --pixels 0:4 --out " + base)
              .exit_code == 0);

    const std::string report = kDir + "/report.csv";
    CHECK(run("evaluate --data " + data + " --pred " + fc + " --index ndvi --method model --out " +
              report)
              .exit_code == 0);
    const std::string report_text = slurp(report);
    CHECK(report_text.rfind("method,index,lead_days,median_l1,p25,p75,count", 0) == 0);
    CHECK(report_text.find("model,ndvi,0,") != std::string::npos);

    const std::string embed_csv = kDir + "/emb.csv";
    CHECK(run("embed --data " + data + " --checkpoint " + ckpt +
              " --year 2016 --pixels 0:8 --components 2 --out " + embed_csv + " --svg " + kDir +
              "/sc --colorings ndvi_mean,rgb")
              .exit_code == 0);
    CHECK(slurp(embed_csv).rfind("pixel_id,pc1,pc2", 0) == 0);
    CHECK(slurp(kDir + "/sc_ndvi_mean.svg").find("<svg") != std::string::npos);
    CHECK(slurp(kDir + "/sc_rgb.svg").find("<svg") != std::string::npos);
}

TEST_CASE("evaluate on predictions equal to the truth reports zeros") {
    TempDir tmp;
    const std::string data_path = kDir + "/truth.eopt";
    CHECK(run("gen-data --pixels 4 --start 2015-01-01 --end 2015-12-27 --seed 5 --dtype f32 "
              "--out " + data_path)
              .exit_code == 0);
    const TokenizedDataset data = read_dataset(data_path);

    // craft a prediction file whose rows are the dataset itself
    Trajectories t;
    t.method = "model";
    t.epoch_day = data.epoch_day;
    t.divergence_day = data.dates[50];
    for (int64_t h = 50; h < 60; ++h) t.dates.push_back(data.dates[h]);
    for (int64_t pixel = 0; pixel < data.n_index; ++pixel) {
        t.pixel_ids.push_back(pixel);
        for (int64_t h = 50; h < 60; ++h)
            for (int b = 0; b < kNumBands; ++b)
                t.bands.push_back(
                    static_cast<float>(denormalize_reflectance(data.row(pixel, h)[b])));
    }
    const std::string pred = kDir + "/pred.csv";
    write_trajectories_csv(t, pred);

    const std::string report = kDir + "/zeros.csv";
    CHECK(run("evaluate --data " + data_path + " --pred " + pred + " --index ndvi --out " + report)
              .exit_code == 0);
    std::ifstream in(report);
    std::string line;
    std::getline(in, line);  // header
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        // median_l1 is the 4th field; %.3f rounding in the csv keeps it tiny
        size_t pos = 0;
        for (int c = 0; c < 3; ++c) pos = line.find(',', pos) + 1;
        CHECK(std::stod(line.substr(pos)) < 1e-4);
    }
    CHECK(rows == 10);
}

TEST_CASE("garbage input files exit with code 2") {
    TempDir tmp;
    const std::string bad = kDir + "/bad.eopt";
    std::ofstream(bad) << "this is not a dataset";
    CHECK(run("train --data " + bad + " --out " + kDir + "/x.eock").exit_code == 2);
    CHECK(run("forecast --data " + bad + " --checkpoint none --divergence 2016-01-01 "
              "--horizon 3 --out " + kDir + "/x.csv")
              .exit_code == 2);
}
