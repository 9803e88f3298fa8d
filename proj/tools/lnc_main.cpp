// lnc — batch CLI for the cascaded lung-nodule pipeline.
//
// Subcommands: gen-phantom, build-masks, train-seg, screen, train-cls,
// infer, eval. Every command is reproducible: identical inputs, flags and
// seed give byte-identical outputs in single-threaded mode. Exit codes:
// 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "lnc/cascade.hpp"
#include "lnc/checkpoint.hpp"
#include "lnc/csv.hpp"
#include "lnc/digest.hpp"
#include "lnc/evaluation.hpp"
#include "lnc/phantom.hpp"
#include "lnc/pipeline.hpp"
#include "lnc/train.hpp"
#include "lnc/volume.hpp"

namespace fs = std::filesystem;
using namespace lnc;

namespace {

void echo_config(CLI::App* cmd, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.txt");
    out << cmd->config_to_str(true, false);
}

struct WindowFlags {
    double lo = kDefaultWindowLo;
    double hi = kDefaultWindowHi;
    void attach(CLI::App* cmd) {
        cmd->add_option("--window-lo", lo, "Lower HU bound of the intensity window");
        cmd->add_option("--window-hi", hi, "Upper HU bound of the intensity window");
    }
};

struct SplitFlags {
    double train, val, test;
    uint64_t seed = 0;
    SplitFlags(double tr, double va, double te) : train(tr), val(va), test(te) {}
    void attach(CLI::App* cmd, const std::string& prefix = "split") {
        cmd->add_option("--" + prefix + "-train", train, "Train fraction");
        cmd->add_option("--" + prefix + "-val", val, "Validation fraction");
        cmd->add_option("--" + prefix + "-test", test, "Test fraction");
        cmd->add_option("--" + prefix + "-seed", seed, "Split shuffle seed");
    }
    SplitConfig to_config() const { return {train, val, test, seed}; }
};

std::vector<fs::path> collect_volumes(const std::vector<std::string>& singles,
                                      const std::string& dir) {
    std::vector<fs::path> out;
    for (const auto& s : singles) out.emplace_back(s);
    if (!dir.empty()) {
        std::vector<fs::path> found;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file() || e.path().extension() != ".mhd") continue;
            std::string stem = e.path().stem().string();
            if (stem.ends_with("_truth") || stem.ends_with("_mask")) continue;
            found.push_back(e.path());
        }
        std::sort(found.begin(), found.end());
        out.insert(out.end(), found.begin(), found.end());
    }
    if (out.empty()) throw std::runtime_error("no input volumes given");
    return out;
}

void cmd_gen_phantom(CLI::App& app) {
    auto* cmd = app.add_subcommand("gen-phantom", "Generate the synthetic phantom dataset");
    auto opts = std::make_shared<PhantomSpec>();
    auto out_dir = std::make_shared<std::string>();
    auto dims = std::make_shared<std::vector<int>>(
        std::vector<int>{opts->dims[0], opts->dims[1], opts->dims[2]});
    auto spacing = std::make_shared<std::vector<double>>(
        std::vector<double>{opts->spacing[0], opts->spacing[1], opts->spacing[2]});
    auto workers = std::make_shared<int>(1);
    auto benign_d = std::make_shared<std::vector<double>>(
        std::vector<double>{opts->benign_diameter_mm[0], opts->benign_diameter_mm[1]});
    auto malig_d = std::make_shared<std::vector<double>>(
        std::vector<double>{opts->malignant_diameter_mm[0], opts->malignant_diameter_mm[1]});
    opts->cases_per_class = 102;

    cmd->set_config("--config");
    cmd->add_option("--out", *out_dir, "Output dataset directory")->required();
    cmd->add_option("--seed", opts->seed, "Root seed");
    cmd->add_option("--cases-per-class", opts->cases_per_class, "Cases per class");
    cmd->add_option("--dims", *dims, "Volume dims (nx ny nz)")->expected(3);
    cmd->add_option("--spacing", *spacing, "Voxel spacing in mm (sx sy sz)")->expected(3);
    cmd->add_option("--background-mean", opts->background_mean_hu, "Background HU mean");
    cmd->add_option("--background-sd", opts->background_noise_sd, "Background HU noise sd");
    cmd->add_option("--benign-diameter", *benign_d, "Benign diameter range mm (lo hi)")
        ->expected(2);
    cmd->add_option("--malignant-diameter", *malig_d,
                    "Malignant diameter range mm (lo hi)")->expected(2);
    cmd->add_option("--spiculation", opts->spiculation_amplitude,
                    "Spiculation amplitude (fraction of radius)");
    cmd->add_option("--nodule-mean", opts->nodule_intensity_mean_hu, "Nodule HU mean");
    cmd->add_option("--nodule-sd", opts->nodule_intensity_sd, "Nodule HU sd");
    cmd->add_option("--workers", *workers, "Parallel generation workers");

    cmd->callback([opts, out_dir, dims, spacing, benign_d, malig_d, workers, cmd]() {
        opts->dims = {(*dims)[0], (*dims)[1], (*dims)[2]};
        opts->spacing = {(*spacing)[0], (*spacing)[1], (*spacing)[2]};
        opts->benign_diameter_mm[0] = (*benign_d)[0];
        opts->benign_diameter_mm[1] = (*benign_d)[1];
        opts->malignant_diameter_mm[0] = (*malig_d)[0];
        opts->malignant_diameter_mm[1] = (*malig_d)[1];
        DatasetManifest manifest = generate_phantom_dataset(*opts, *out_dir, *workers);
        echo_config(cmd, *out_dir);
        std::cout << "wrote " << manifest.files.size() << " files to " << *out_dir << "\n";
        std::cout << "manifest " << sha256_file(fs::path(*out_dir) / "manifest.json") << "\n";
    });
}

void cmd_build_masks(CLI::App& app) {
    auto* cmd = app.add_subcommand("build-masks",
                                   "Rasterize reference masks from an annotation table");
    struct Args {
        std::string volumes, annotations, out;
        int pad = 5;
        double min_diameter = 0;
        bool disk = false, strict = false;
    };
    auto a = std::make_shared<Args>();
    cmd->set_config("--config");
    cmd->add_option("--volumes", a->volumes, "Directory of case volumes")->required();
    cmd->add_option("--annotations", a->annotations, "Annotation CSV")->required();
    cmd->add_option("--out", a->out, "Output directory")->required();
    cmd->add_option("--pad", a->pad, "Slice padding before/after the nodule extent");
    cmd->add_option("--min-diameter", a->min_diameter, "Skip findings below this diameter");
    cmd->add_flag("--disk", a->disk, "Per-slice full-diameter disks instead of a 3D ball");
    cmd->add_flag("--strict", a->strict, "Fail on annotations without a matching volume");

    cmd->callback([a, cmd]() {
        auto volumes = collect_volumes({}, a->volumes);
        auto annotations = parse_annotations(a->annotations);
        fs::create_directories(a->out);

        std::set<std::string> known;
        for (const auto& v : volumes) known.insert(v.stem().string());
        for (const auto& ann : annotations) {
            if (known.count(ann.series_uid)) continue;
            if (a->strict)
                throw std::runtime_error("annotation series '" + ann.series_uid +
                                         "' has no matching volume");
            std::cerr << "warning: annotation series '" << ann.series_uid
                      << "' has no matching volume\n";
        }

        RasterizeOptions ropts;
        ropts.per_slice_disk = a->disk;
        ropts.min_diameter_mm = a->min_diameter;
        int written = 0;
        for (const auto& vp : volumes) {
            const std::string uid = vp.stem().string();
            std::vector<NoduleAnnotation> findings;
            for (const auto& ann : annotations)
                if (ann.series_uid == uid) findings.push_back(ann);
            if (findings.empty()) continue;
            CtVolume vol = load_volume(vp);
            MaskVolume mask = rasterize_mask(vol, findings, ropts);
            save_mask(mask, fs::path(a->out) / (uid + "_mask.mhd"));
            std::ofstream sl(fs::path(a->out) / (uid + "_slices.csv"));
            sl << "slice_index\n";
            for (int z : select_slices(mask, a->pad)) sl << z << '\n';
            ++written;
        }
        echo_config(cmd, a->out);
        std::cout << "wrote " << written << " masks to " << a->out << "\n";
    });
}

void attach_train_common(CLI::App* cmd, TrainConfig& tc) {
    cmd->add_option("--seed", tc.seed, "Training seed (init, batch order, dropout)");
    cmd->add_option("--epochs", tc.epochs, "Training epochs");
    cmd->add_option("--batch-size", tc.batch_size, "Batch size");
    cmd->add_option("--lr", tc.learning_rate, "Learning rate");
    cmd->add_option("--workers", tc.workers, "Worker threads");
}

void cmd_train_seg(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-seg", "Train the segmentation/screening network");
    struct Args {
        std::string data, out;
        TrainConfig tc;
        int pad = 5;
        double min_diameter = 0;
        bool disk = false;
    };
    auto a = std::make_shared<Args>();
    auto window = std::make_shared<WindowFlags>();
    auto split = std::make_shared<SplitFlags>(0.8, 0.05, 0.15);
    a->tc.epochs = 1;
    cmd->set_config("--config");
    cmd->add_option("--data", a->data, "Dataset directory (volumes + annotations.csv)")
        ->required();
    cmd->add_option("--out", a->out, "Run output directory")->required();
    attach_train_common(cmd, a->tc);
    split->attach(cmd);
    window->attach(cmd);
    cmd->add_option("--pad", a->pad, "Slice padding");
    cmd->add_option("--min-diameter", a->min_diameter, "Skip findings below this diameter");
    cmd->add_flag("--disk", a->disk, "Per-slice disk rasterization");

    cmd->callback([a, window, split, cmd]() {
        DatasetIndex data = load_dataset(a->data);
        PreprocOptions pre;
        pre.window_lo = window->lo;
        pre.window_hi = window->hi;
        pre.pad = a->pad;
        pre.raster.per_slice_disk = a->disk;
        pre.raster.min_diameter_mm = a->min_diameter;
        SegRun run = run_seg_training(data, split->to_config(), a->tc, pre);
        fs::create_directories(a->out);
        const fs::path ckpt_path = fs::path(a->out) / "seg_ckpt.json";
        save_checkpoint(run.ckpt, ckpt_path);
        run.history.save_csv(fs::path(a->out) / "history.csv");
        echo_config(cmd, a->out);
        std::cout << "checkpoint " << sha256_file(ckpt_path) << "\n";
        std::cout << "train_loss " << format_double(run.ckpt.meta.final_train_loss)
                  << " val_loss " << format_double(run.ckpt.meta.final_val_loss) << "\n";
    });
}

void cmd_train_cls(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-cls", "Train the benign/malignant classifier");
    struct Args {
        std::string data, out, seg_ckpt;
        std::string arch = nn::kArchClsEncoder;
        TrainConfig tc;
        double threshold = kDefaultScreenThreshold;
        bool binarize = false;
    };
    auto a = std::make_shared<Args>();
    auto window = std::make_shared<WindowFlags>();
    auto split = std::make_shared<SplitFlags>(0.6, 0.15, 0.25);
    a->tc.epochs = 12;
    cmd->set_config("--config");
    cmd->add_option("--data", a->data, "Dataset directory (volumes + labels.csv)")->required();
    cmd->add_option("--seg-ckpt", a->seg_ckpt, "Frozen screening checkpoint")->required();
    cmd->add_option("--out", a->out, "Run output directory")->required();
    cmd->add_option("--arch", a->arch, "Classifier arch")
        ->check(CLI::IsMember({nn::kArchClsEncoder, nn::kArchClsFc, nn::kArchClsEncDec}));
    attach_train_common(cmd, a->tc);
    cmd->add_option("--oversample", a->tc.oversample_factor, "Benign oversampling factor");
    cmd->add_option("--threshold", a->threshold, "Discriminator threshold on max pixel prob");
    cmd->add_flag("--binarize", a->binarize, "Binarize the fused probability channel at 0.5");
    split->attach(cmd);
    window->attach(cmd);

    cmd->callback([a, window, split, cmd]() {
        DatasetIndex data = load_dataset(a->data);
        ModelCheckpoint seg = load_checkpoint(a->seg_ckpt);
        ClsAssemblyOptions opts;
        opts.threshold = a->threshold;
        opts.binarize = a->binarize;
        opts.window_lo = window->lo;
        opts.window_hi = window->hi;
        opts.workers = a->tc.workers;
        ClsRun run = run_cls_training(data, seg, a->arch, split->to_config(), a->tc, opts);
        fs::create_directories(a->out);
        const fs::path ckpt_path = fs::path(a->out) / "cls_ckpt.json";
        save_checkpoint(run.ckpt, ckpt_path);
        run.history.save_csv(fs::path(a->out) / "history.csv");
        echo_config(cmd, a->out);
        std::cout << "checkpoint " << sha256_file(ckpt_path) << "\n";
        std::cout << "train_loss " << format_double(run.ckpt.meta.final_train_loss)
                  << " val_loss " << format_double(run.ckpt.meta.final_val_loss) << "\n";
    });
}

void cmd_screen(CLI::App& app) {
    auto* cmd = app.add_subcommand("screen", "Run the screening net over volumes");
    struct Args {
        std::vector<std::string> volume;
        std::string volumes, seg_ckpt, out;
        double threshold = kDefaultScreenThreshold;
        int workers = 1;
    };
    auto a = std::make_shared<Args>();
    auto window = std::make_shared<WindowFlags>();
    cmd->set_config("--config");
    cmd->add_option("--volume", a->volume, "Volume header file (repeatable)");
    cmd->add_option("--volumes", a->volumes, "Directory of volumes");
    cmd->add_option("--seg-ckpt", a->seg_ckpt, "Screening checkpoint")->required();
    cmd->add_option("--out", a->out, "Output directory")->required();
    cmd->add_option("--threshold", a->threshold, "Discriminator threshold");
    cmd->add_option("--workers", a->workers, "Worker threads");
    window->attach(cmd);

    cmd->callback([a, window, cmd]() {
        ModelCheckpoint seg = load_checkpoint(a->seg_ckpt);
        fs::create_directories(a->out);
        for (const auto& vp : collect_volumes(a->volume, a->volumes)) {
            const std::string uid = vp.stem().string();
            CtVolume vol = load_volume(vp);
            NormalizedVolume norm = normalize_hu(vol, window->lo, window->hi);
            auto slices = extract_all_slices(norm, std::nullopt, uid);
            auto screened = screen_slices(seg, slices, a->threshold, a->workers);
            save_screen_csv(screened, fs::path(a->out) / (uid + "_screen.csv"));
        }
        echo_config(cmd, a->out);
    });
}

void cmd_infer(CLI::App& app) {
    auto* cmd = app.add_subcommand("infer", "Run the full cascade and emit case verdicts");
    struct Args {
        std::vector<std::string> volume;
        std::string volumes, seg_ckpt, cls_ckpt, out;
        std::string aggregate = "mean";
        double threshold = kDefaultScreenThreshold;
        bool binarize = false;
        int workers = 1;
    };
    auto a = std::make_shared<Args>();
    auto window = std::make_shared<WindowFlags>();
    cmd->set_config("--config");
    cmd->add_option("--volume", a->volume, "Volume header file (repeatable)");
    cmd->add_option("--volumes", a->volumes, "Directory of volumes");
    cmd->add_option("--seg-ckpt", a->seg_ckpt, "Screening checkpoint")->required();
    cmd->add_option("--cls-ckpt", a->cls_ckpt, "Classifier checkpoint")->required();
    cmd->add_option("--out", a->out, "Output directory")->required();
    cmd->add_option("--threshold", a->threshold, "Discriminator threshold");
    cmd->add_option("--aggregate", a->aggregate, "Case aggregation: mean or majority")
        ->check(CLI::IsMember({"mean", "majority"}));
    cmd->add_flag("--binarize", a->binarize, "Binarize the fused probability channel");
    cmd->add_option("--workers", a->workers, "Worker threads");
    window->attach(cmd);

    cmd->callback([a, window, cmd]() {
        ModelCheckpoint seg = load_checkpoint(a->seg_ckpt);
        ModelCheckpoint cls = load_checkpoint(a->cls_ckpt);
        CascadeOptions opts;
        opts.threshold = a->threshold;
        opts.binarize_prob_map = a->binarize;
        opts.aggregation = a->aggregate == "majority" ? CaseAggregation::majority_vote
                                                      : CaseAggregation::mean_probability;
        opts.workers = a->workers;
        std::vector<CaseVerdict> verdicts;
        for (const auto& vp : collect_volumes(a->volume, a->volumes)) {
            CtVolume vol = load_volume(vp);
            verdicts.push_back(run_cascade(seg, cls, vol, vp.stem().string(), opts,
                                           window->lo, window->hi));
        }
        fs::create_directories(a->out);
        save_verdicts_csv(verdicts, fs::path(a->out) / "verdicts.csv");
        echo_config(cmd, a->out);
        std::cout << "wrote " << verdicts.size() << " verdicts\n";
    });
}

void cmd_eval(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "eval", "Evaluate checkpoints: case metrics, ROC/AUC, pixel ROC, comparison table");
    struct Args {
        std::string data, seg_ckpt, out;
        std::vector<std::string> cls_ckpts;
        std::string aggregate = "mean";
        double threshold = kDefaultScreenThreshold;
        bool binarize = false;
        int workers = 1;
        int pad = 5;
    };
    auto a = std::make_shared<Args>();
    auto window = std::make_shared<WindowFlags>();
    auto split = std::make_shared<SplitFlags>(0.6, 0.15, 0.25);
    auto seg_split = std::make_shared<SplitFlags>(0.8, 0.05, 0.15);
    cmd->set_config("--config");
    cmd->add_option("--data", a->data, "Dataset directory")->required();
    cmd->add_option("--seg-ckpt", a->seg_ckpt, "Screening checkpoint")->required();
    cmd->add_option("--cls-ckpt", a->cls_ckpts, "Classifier checkpoint (repeatable)")
        ->required();
    cmd->add_option("--out", a->out, "Output directory")->required();
    cmd->add_option("--threshold", a->threshold, "Discriminator threshold");
    cmd->add_option("--aggregate", a->aggregate, "Case aggregation: mean or majority")
        ->check(CLI::IsMember({"mean", "majority"}));
    cmd->add_flag("--binarize", a->binarize, "Binarize the fused probability channel");
    cmd->add_option("--workers", a->workers, "Worker threads");
    cmd->add_option("--pad", a->pad, "Slice padding for the pixel evaluation");
    split->attach(cmd);
    seg_split->attach(cmd, "seg-split");
    window->attach(cmd);

    cmd->callback([a, window, split, seg_split, cmd]() {
        DatasetIndex data = load_dataset(a->data);
        ModelCheckpoint seg = load_checkpoint(a->seg_ckpt);
        fs::create_directories(a->out);

        // Case-level evaluation on the classifier split's test cases.
        SplitConfig cls_split_cfg = split->to_config();
        SplitIndices cls_split = split_dataset(data.cases.size(), cls_split_cfg);
        const std::string split_id = make_split_id(data, cls_split_cfg);
        CascadeOptions opts;
        opts.threshold = a->threshold;
        opts.binarize_prob_map = a->binarize;
        opts.aggregation = a->aggregate == "majority" ? CaseAggregation::majority_vote
                                                      : CaseAggregation::mean_probability;
        opts.workers = a->workers;

        std::vector<EvalReport> reports;
        for (const auto& cp : a->cls_ckpts) {
            ModelCheckpoint cls = load_checkpoint(cp);
            const std::string stem = fs::path(cp).stem().string();
            CaseEval eval = evaluate_cases(data, seg, cls, cls_split.test, opts, window->lo,
                                           window->hi, stem + ":" + cls.arch_id, split_id);
            save_verdicts_csv(eval.verdicts, fs::path(a->out) / ("verdicts_" + stem + ".csv"));
            if (!eval.report.roc.empty())
                save_roc_csv(eval.report.roc, fs::path(a->out) / ("case_roc_" + stem + ".csv"));
            if (eval.report.auc)
                std::cout << "case_auc " << stem << " " << format_double(*eval.report.auc)
                          << "\n";
            reports.push_back(std::move(eval.report));
        }
        ComparisonReport cmp = compare_networks(reports);
        cmp.save_csv(fs::path(a->out) / "report.csv");
        {
            std::ofstream t(fs::path(a->out) / "report.txt");
            t << cmp.to_text_table();
        }
        std::cout << cmp.to_text_table();

        // Pixel-level segmentation ROC on the segmentation split's test cases.
        PreprocOptions pre;
        pre.window_lo = window->lo;
        pre.window_hi = window->hi;
        pre.pad = a->pad;
        SplitIndices seg_split_idx = split_dataset(data.cases.size(), seg_split->to_config());
        PixelEval pix = evaluate_pixels(data, seg, seg_split_idx.test, pre, a->workers);
        save_roc_csv(pix.roc.roc, fs::path(a->out) / "pixel_roc.csv");
        std::cout << "pixel_auc " << format_double(pix.roc.auc) << " over " << pix.n_slices
                  << " slices\n";
        echo_config(cmd, a->out);
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded lung-nodule screening and classification pipeline"};
    app.option_defaults()->always_capture_default(true);
    app.require_subcommand(1);

    cmd_gen_phantom(app);
    cmd_build_masks(app);
    cmd_train_seg(app);
    cmd_train_cls(app);
    cmd_screen(app);
    cmd_infer(app);
    cmd_eval(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
