#include <CLI11.hpp>

#include <iostream>

#include "wdrn/commands.hpp"

int main(int argc, char** argv) {
    using namespace wdrn;
    CLI::App app{"Wavelet decomposed relighting network"};
    app.require_subcommand(1);

    TrainArgs train_args;
    std::string out_dir;
    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, log.csv and summary.txt");
    train->add_option("--config", train_args.config, "key = value config file")->check(CLI::ExistingFile);
    auto* data_opt = train->add_option("--data", train_args.data, "dataset root with input/ and target/ PNGs");
    auto* synth_opt = train->add_option("--synthetic", train_args.synthetic, "train on N synthetic pairs");
    data_opt->excludes(synth_opt);
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--set", train_args.settings, "override a config key (key=value), repeatable");

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Relight every PNG in a directory");
    infer->add_option("--checkpoint", infer_args.checkpoint)->required();
    infer->add_option("--input", infer_args.input)->required();
    infer->add_option("--out", infer_args.out)->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "PSNR / SSIM (and MPS given LPIPS) of predictions against ground truth");
    eval->add_option("--pred", eval_args.pred)->required();
    eval->add_option("--gt", eval_args.gt)->required();
    eval->add_option("--lpips", eval_args.lpips, "CSV of name,lpips");
    eval->add_option("--out", eval_args.out, "metrics CSV (default: stdout)");

    AblateArgs ablate_args;
    std::string width = "1/8";
    auto* ablate = app.add_subcommand("ablate", "Compare wavelet vs strided, or 2/3/4 levels");
    ablate->add_option("--which", ablate_args.which)->required()->check(CLI::IsMember({"domain", "levels"}));
    ablate->add_option("--synthetic", ablate_args.synthetic, "number of synthetic pairs")->capture_default_str();
    ablate->add_option("--steps", ablate_args.steps, "full-batch Adam steps per variant")->capture_default_str();
    ablate->add_option("--seed", ablate_args.seed)->capture_default_str();
    ablate->add_option("--width-scale", width)->capture_default_str();
    ablate->add_option("--image-size", ablate_args.image_size)->capture_default_str();
    ablate->add_option("--lr", ablate_args.lr)->capture_default_str();
    ablate->add_option("--out", ablate_args.out, "CSV path (default: stdout)");

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and loss");
    gradcheck->add_option("--threshold", gc.threshold)->capture_default_str();
    gradcheck->add_option("--seed", gc.seed)->capture_default_str();
    gradcheck->add_option("--inject-fault", gc.corrupt_op, "corrupt the backward pass of the named op (test hook)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (train->parsed()) {
        train_args.out = out_dir;
        return cmd_train(train_args, std::cout, std::cerr);
    }
    if (infer->parsed()) return cmd_infer(infer_args, std::cout, std::cerr);
    if (eval->parsed()) return cmd_eval(eval_args, std::cout, std::cerr);
    if (ablate->parsed()) {
        try {
            ablate_args.width_scale = Ratio::parse(width);
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitUsage;
        }
        return cmd_ablate(ablate_args, std::cout, std::cerr);
    }
    return cmd_gradcheck(gc, std::cout, std::cerr);
}
