#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "wdrn/commands.hpp"

using namespace wdrn;
using wdrn::test::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

TrainArgs small_train_args(const TempDir& dir) {
    TrainArgs a;
    a.synthetic = 4;
    a.out = dir / "run";
    a.settings = {"epochs=1", "batch_size=2", "image_size=32", "width_scale=1/8", "blur_kernel=9", "blur_sigma=2"};
    return a;
}

void write_identity_checkpoint(const std::filesystem::path& path, std::size_t levels) {
    const auto cfg = WdrnConfig::standard(levels, DomainVariant::wavelet, {1, 8});
    const auto m = build<float>(cfg, 0);
    save_checkpoint(Checkpoint{cfg, m.params, AdamState::zeros_like(m.params), 0, ""}, path);
}

RgbImage noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
    for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng());
    return img;
}

}  // namespace

TEST(CmdTrain, WritesAllArtifacts) {
    TempDir dir("cmdtrain");
    auto a = small_train_args(dir);
    a.settings.push_back("split=0.5,0.25,0.25");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_train(a, out, err), kExitOk) << err.str();
    for (const char* f : {"summary.txt", "split.tsv", "log.csv", "checkpoint.wdrn", "best.wdrn"}) {
        EXPECT_TRUE(std::filesystem::exists(a.out / f)) << f;
    }
    const auto log = lines_of(slurp(a.out / "log.csv"));
    ASSERT_EQ(log.size(), 2u);
    EXPECT_EQ(log[0], kTrainLogHeader);
    EXPECT_EQ(lines_of(slurp(a.out / "split.tsv")).size(), 4u);
    EXPECT_NE(slurp(a.out / "summary.txt").find("split train 2, val 1, test 1"), std::string::npos);
    const auto c = load_checkpoint(a.out / "checkpoint.wdrn");
    EXPECT_EQ(c.config, WdrnConfig::standard(3, DomainVariant::wavelet, {1, 8}));
    EXPECT_EQ(c.epoch, 1u);
}

TEST(CmdTrain, ConfigFileRequiresKeys) {
    TempDir dir("cmdcfg");
    std::ofstream(dir / "run.cfg") << "epochs = 1\nlr = 1e-3\n";
    auto a = small_train_args(dir);
    a.config = dir / "run.cfg";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_train(a, out, err), kExitUsage);
    EXPECT_NE(err.str().find("missing required config key 'batch_size'"), std::string::npos) << err.str();
}

TEST(CmdTrain, OverridesBeatConfigFile) {
    TempDir dir("cmdprec");
    std::ofstream(dir / "run.cfg") << "epochs = 7\nbatch_size = 3\nlr = 1e-3\ngamma = 0.5\n";
    TrainArgs a;
    a.config = dir / "run.cfg";
    a.settings = {"gamma=0.25"};
    const RunConfig rc = resolve_run_config(a);
    EXPECT_EQ(rc.train.epochs, 7u);
    EXPECT_EQ(rc.train.batch_size, 3u);
    EXPECT_EQ(rc.train.loss.gamma, 0.25);
}

TEST(CmdTrain, UsageErrors) {
    TempDir dir("cmdusage");
    std::ostringstream out, err;
    auto a = small_train_args(dir);
    a.settings.push_back("unknown_key=3");
    EXPECT_EQ(cmd_train(a, out, err), kExitUsage);
    a = small_train_args(dir);
    a.data = dir.path();
    EXPECT_EQ(cmd_train(a, out, err), kExitUsage);  // both sources
    a = small_train_args(dir);
    a.settings.push_back("levels=7");
    EXPECT_EQ(cmd_train(a, out, err), kExitUsage);
    a = small_train_args(dir);
    a.settings.push_back("noequals");
    EXPECT_EQ(cmd_train(a, out, err), kExitUsage);
}

TEST(CmdTrain, ZeroEpochsGivesHeaderOnlyLog) {
    TempDir dir("cmdzero");
    auto a = small_train_args(dir);
    a.settings.push_back("epochs=0");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_train(a, out, err), kExitOk) << err.str();
    EXPECT_NE(slurp(a.out / "summary.txt").find("parameter_count"), std::string::npos);
    EXPECT_EQ(lines_of(slurp(a.out / "log.csv")), (std::vector<std::string>{kTrainLogHeader}));
}

TEST(CmdTrain, DataDirectoryAndIndivisibleSize) {
    TempDir dir("cmddata");
    std::filesystem::create_directories(dir / "d" / "input");
    std::filesystem::create_directories(dir / "d" / "target");
    for (const std::string n : {"a.png", "b.png"}) {
        write_png_rgb8(dir / "d" / "input" / n, noise_image(40, 40, 1));
        write_png_rgb8(dir / "d" / "target" / n, noise_image(40, 40, 2));
    }
    TrainArgs a = small_train_args(dir);
    a.synthetic.reset();
    a.data = dir / "d";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_train(a, out, err), kExitRuntime);
    EXPECT_NE(err.str().find("not divisible by 16"), std::string::npos) << err.str();
}

TEST(CmdInfer, IdentityCheckpointReproducesPngs) {
    TempDir dir("cmdinfer");
    write_identity_checkpoint(dir / "id.wdrn", 3);
    std::filesystem::create_directories(dir / "in");
    write_png_rgb8(dir / "in" / "a.png", noise_image(32, 48, 1));
    write_png_rgb8(dir / "in" / "b.png", noise_image(64, 64, 2));
    std::ostringstream out, err;
    ASSERT_EQ(cmd_infer(InferArgs{dir / "id.wdrn", dir / "in", dir / "out"}, out, err), kExitOk) << err.str();
    for (const char* n : {"a.png", "b.png"}) {
        EXPECT_EQ(read_png_rgb8(dir / "out" / n), read_png_rgb8(dir / "in" / n)) << n;
    }
    EXPECT_NE(out.str().find("a.png "), std::string::npos);
    EXPECT_NE(out.str().find(" ms"), std::string::npos);
}

TEST(CmdInfer, EmptyDirectoryWarns) {
    TempDir dir("cmdinferempty");
    write_identity_checkpoint(dir / "id.wdrn", 3);
    std::filesystem::create_directories(dir / "in");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_infer(InferArgs{dir / "id.wdrn", dir / "in", dir / "out"}, out, err), kExitOk);
    EXPECT_NE(err.str().find("warning"), std::string::npos);
}

TEST(CmdInfer, BadFileReportedOthersProcessed) {
    TempDir dir("cmdinferbad");
    write_identity_checkpoint(dir / "id.wdrn", 3);
    std::filesystem::create_directories(dir / "in");
    write_png_rgb8(dir / "in" / "bad.png", noise_image(40, 32, 1));
    write_png_rgb8(dir / "in" / "good.png", noise_image(32, 32, 2));
    std::ostringstream out, err;
    EXPECT_EQ(cmd_infer(InferArgs{dir / "id.wdrn", dir / "in", dir / "out"}, out, err), kExitRuntime);
    EXPECT_NE(err.str().find("bad.png"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "good.png"));
    EXPECT_FALSE(std::filesystem::exists(dir / "out" / "bad.png"));
}

TEST(CmdInfer, MissingOrCorruptCheckpoint) {
    TempDir dir("cmdinferckpt");
    std::filesystem::create_directories(dir / "in");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_infer(InferArgs{dir / "none.wdrn", dir / "in", dir / "out"}, out, err), kExitRuntime);
    std::ofstream(dir / "junk.wdrn") << "JUNKJUNK";
    EXPECT_EQ(cmd_infer(InferArgs{dir / "junk.wdrn", dir / "in", dir / "out"}, out, err), kExitRuntime);
    EXPECT_NE(err.str().find("bad magic"), std::string::npos);
}

TEST(CmdEval, IdenticalImages) {
    TempDir dir("cmdeval");
    std::filesystem::create_directories(dir / "p");
    std::filesystem::create_directories(dir / "g");
    write_png_rgb8(dir / "p" / "x.png", noise_image(16, 16, 3));
    write_png_rgb8(dir / "g" / "x.png", noise_image(16, 16, 3));
    std::ostringstream out, err;
    ASSERT_EQ(cmd_eval(EvalArgs{dir / "p", dir / "g", std::nullopt, std::nullopt}, out, err), kExitOk);
    const auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[1], "name,psnr_db,ssim,lpips,mps");
    EXPECT_EQ(lines[2], "x.png,inf,1.000000,,");
}

TEST(CmdEval, LpipsGivesMps) {
    TempDir dir("cmdevallpips");
    std::filesystem::create_directories(dir / "p");
    std::filesystem::create_directories(dir / "g");
    write_png_rgb8(dir / "p" / "x.png", noise_image(16, 16, 4));
    write_png_rgb8(dir / "g" / "x.png", noise_image(16, 16, 5));
    std::ofstream(dir / "l.csv") << "name,lpips\nx.png,0.3405\n";
    std::ostringstream out, err;
    ASSERT_EQ(cmd_eval(EvalArgs{dir / "p", dir / "g", dir / "l.csv", dir / "m.csv"}, out, err), kExitOk);
    const auto lines = lines_of(slurp(dir / "m.csv"));
    ASSERT_EQ(lines.size(), 4u);
    std::istringstream row(lines[2]);
    std::vector<std::string> cells;
    for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 5u);
    const double s = std::stod(cells[2]);
    EXPECT_EQ(cells[3], "0.340500");
    EXPECT_NEAR(std::stod(cells[4]), 0.5 * (s + 1.0 - 0.3405), 1e-6);
}

TEST(CmdEval, ReferenceScoresRoundToExpectedMps) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.4f", make_report(0.0, 0.6310, 0.3405).mps.value());
    EXPECT_STREQ(buf, "0.6452");
}

TEST(CmdEval, MissingGroundTruthIsErrorRow) {
    TempDir dir("cmdevalmissing");
    std::filesystem::create_directories(dir / "p");
    std::filesystem::create_directories(dir / "g");
    write_png_rgb8(dir / "p" / "x.png", noise_image(16, 16, 3));
    write_png_rgb8(dir / "g" / "x.png", noise_image(16, 16, 3));
    write_png_rgb8(dir / "p" / "y.png", noise_image(16, 16, 3));
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(EvalArgs{dir / "p", dir / "g", std::nullopt, std::nullopt}, out, err), kExitRuntime);
    EXPECT_NE(out.str().find("y.png,,,,\n"), std::string::npos);
    EXPECT_NE(out.str().find("mean,inf,1.000000,,\n"), std::string::npos);
    EXPECT_NE(err.str().find("y.png"), std::string::npos);
}

TEST(CmdEval, LpipsFileErrors) {
    TempDir dir("cmdevalbad");
    std::ofstream(dir / "l.csv") << "x.png,abc\n";
    EXPECT_THROW(read_lpips_csv(dir / "l.csv"), DataError);
    std::ofstream(dir / "m.csv") << "# comment\nx.png, 0.25\n";
    EXPECT_EQ(read_lpips_csv(dir / "m.csv").at("x.png"), 0.25);
}

TEST(CmdAblate, DomainRowsAndDeterminism) {
    AblateArgs a;
    a.which = "domain";
    a.synthetic = 4;
    a.steps = 3;
    a.image_size = 32;
    std::ostringstream log;
    const auto rows = run_ablation(a, log);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].variant, "wavelet");
    EXPECT_EQ(rows[1].variant, "strided");
    const auto again = run_ablation(a, log);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].final_loss, again[i].final_loss);
        EXPECT_EQ(rows[i].psnr_db, again[i].psnr_db);
    }
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    const auto lines = lines_of(csv.str());
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], kAblationHeader);
    EXPECT_EQ(lines[1].rfind("wavelet,", 0), 0u);
}

TEST(CmdAblate, LevelsRows) {
    AblateArgs a;
    a.which = "levels";
    a.synthetic = 2;
    a.steps = 1;
    a.image_size = 32;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_ablate(a, out, err), kExitOk) << err.str();
    const auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[1].rfind("2 level,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("4 level,", 0), 0u);
}

TEST(CmdAblate, UsageErrors) {
    AblateArgs a;
    a.which = "depth";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_ablate(a, out, err), kExitUsage);
    a.which = "domain";
    a.steps = 0;
    EXPECT_EQ(cmd_ablate(a, out, err), kExitUsage);
}

TEST(CmdGradcheck, AllRowsPass) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_gradcheck(GradcheckOptions{}, out, err), kExitOk) << err.str();
    const auto lines = lines_of(out.str());
    ASSERT_GT(lines.size(), 20u);
    EXPECT_EQ(lines[0], "op,max_rel_error,checked,status");
    std::set<std::string> ops;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        EXPECT_EQ(lines[i].substr(lines[i].size() - 3), ",ok") << lines[i];
        ops.insert(lines[i].substr(0, lines[i].find(',')));
    }
    for (const char* op : {"relu", "dwt2", "idwt2", "space_to_depth", "depth_to_space", "mae_loss", "ssim_loss",
                           "gray_loss", "wdrn_wavelet"}) {
        EXPECT_TRUE(ops.contains(op)) << op;
    }
}

TEST(CmdGradcheck, InjectedFaultDetected) {
    GradcheckOptions opt;
    opt.corrupt_op = "dwt2";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_gradcheck(opt, out, err), kExitRuntime);
    EXPECT_NE(out.str().find("dwt2,"), std::string::npos);
    EXPECT_NE(out.str().find("FAIL"), std::string::npos);
}
