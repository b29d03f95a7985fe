#include "run_config.hpp"

#include "lesionkit/catalog.hpp"
#include "lesionkit/csv.hpp"
#include "lesionkit/dedup.hpp"
#include "lesionkit/ensemble.hpp"
#include "lesionkit/error.hpp"
#include "lesionkit/imageops.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/stacker.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace lesionkit;
using cli::UsageError;
using imageops::FloatPlane;

namespace {

void emit(const CLI::App& sub, const std::string& path, std::string_view contents) {
    csv::write_file(path, contents);
    csv::write_file(path + ".config", cli::resolved_config(sub));
}

FloatPlane read_mask(const std::string& path) {
    if (fs::path(path).extension() == ".lkfp") return imageops::decode_float_plane(csv::read_file(path));
    return imageops::rescale_mask(imageops::read_pnm(path));
}

std::string metric_rows(const std::vector<std::pair<std::string, double>>& rows) {
    std::ostringstream out;
    csv::write_row(out, {"metric", "value"});
    for (const auto& [k, v] : rows) csv::write_row(out, {k, csv::format_real(v, 9)});
    return out.str();
}

const std::map<std::string, stacker::Combination> kCombinations = {
    {"cartesian", stacker::Combination::cartesian}, {"aligned", stacker::Combination::aligned}};

struct StackFlags {
    int replicas = 3;
    std::size_t cap = 50;
    std::string combination = "cartesian";
    std::uint64_t seed = 0;

    void add_to(CLI::App* sub) {
        sub->add_option("--replicas", replicas, "Replicas used per model (0 = all)")->capture_default_str();
        sub->add_option("--cap", cap, "Maximum combined replicas per image")->capture_default_str();
        sub->add_option("--combination", combination, "cartesian or aligned")
            ->check(CLI::IsMember({"cartesian", "aligned"}))
            ->capture_default_str();
        sub->add_option("--seed", seed, "Seed for sampling combinations")->capture_default_str();
    }
    stacker::StackConfig config() const {
        stacker::StackConfig c{replicas, cap, kCombinations.at(combination), seed};
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------

struct Assemble {
    std::string manifest, profile = "deploy", clusters, weights = "none", out;
    std::vector<std::string> exclude;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("assemble", "Filter a manifest through an assembly profile");
        s->add_option("--manifest", manifest, "Manifest CSV")->required();
        s->add_option("--profile", profile, "deploy or semi")
            ->check(CLI::IsMember({"deploy", "semi"}))
            ->capture_default_str();
        s->add_option("--exclude", exclude, "Extra exclusion rule, e.g. \"source == atlas && age == 15\"");
        s->add_option("--clusters", clusters, "Cluster CSV; keep one image per cluster");
        s->add_option("--weights", weights, "none, uniform, class_inverse, verification_tier or combined")
            ->check(CLI::IsMember({"none", "uniform", "class_inverse", "verification_tier", "combined"}))
            ->capture_default_str();
        s->add_option("--out", out, "Output manifest CSV")->required();
        sub = s;
    }

    void run() const {
        auto parsed = catalog::parse_manifest(csv::read_file(manifest));
        for (const auto& w : parsed.warning_messages) std::cerr << "warning: " << w << "\n";

        auto records = std::move(parsed.records);
        if (!clusters.empty()) {
            const auto cl = dedup::read_clusters(csv::read_file(clusters));
            const auto reps = dedup::cluster_representatives(cl);
            const std::set<std::string> keep(reps.begin(), reps.end());
            std::set<std::string> clustered;
            for (const auto& c : cl) clustered.insert(c.members.begin(), c.members.end());
            std::erase_if(records, [&](const catalog::ImageRecord& r) {
                return clustered.count(r.image_id) && !keep.count(r.image_id);
            });
        }

        auto prof = *catalog::named_profile(profile);
        for (const auto& text : exclude) prof.exclusion_rules.push_back(catalog::ExclusionRule::parse(text));
        const auto assembly = catalog::assemble(records, prof);

        if (weights == "none") {
            emit(*sub, out, catalog::write_manifest(assembly.records));
        } else {
            catalog::WeightScheme scheme;
            scheme.kind = *catalog::parse_weight_kind(weights);
            const auto w = catalog::compute_sample_weights(assembly, scheme);
            emit(*sub, out, catalog::write_manifest(assembly.records, &w));
        }

        std::cout << "key,value\n";
        std::cout << "profile," << assembly.profile_name << "\n";
        std::cout << "images," << assembly.records.size() << "\n";
        for (const auto& [d, n] : assembly.class_counts) std::cout << catalog::to_string(d) << "," << n << "\n";
    }
    CLI::App* sub = nullptr;
};

struct Dedup {
    std::string manifest, root = ".", out;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("dedup", "Hash every image listed in a manifest");
        s->add_option("--manifest", manifest, "Manifest CSV")->required();
        s->add_option("--root", root, "Directory that manifest paths are relative to")->capture_default_str();
        s->add_option("--out", out, "Output hash CSV")->required();
        sub = s;
    }

    void run() const {
        const auto parsed = catalog::parse_manifest(csv::read_file(manifest));
        std::vector<dedup::ImageHash> hashes;
        hashes.reserve(parsed.records.size());
        for (const auto& r : parsed.records) {
            const auto bytes = csv::read_file((fs::path(root) / r.path).string());
            try {
                hashes.push_back(dedup::hash_image_file(r.image_id, bytes));
            } catch (const Error& e) {
                throw ValidationError(r.image_id + ": " + e.what());
            }
        }
        emit(*sub, out, dedup::write_hashes(hashes));
    }
    CLI::App* sub = nullptr;
};

struct Cluster {
    std::string hashes, out;
    int threshold = dedup::kDefaultHammingThreshold;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("cluster", "Group near-duplicate images");
        s->add_option("--hashes", hashes, "Hash CSV from dedup")->required();
        s->add_option("--threshold", threshold, "Maximum Hamming distance between average hashes")
            ->capture_default_str();
        s->add_option("--out", out, "Output cluster CSV")->required();
        sub = s;
    }

    void run() const {
        const auto clusters = dedup::cluster_duplicates(dedup::read_hashes(csv::read_file(hashes)), threshold);
        emit(*sub, out, dedup::write_clusters(clusters));
        std::size_t multi = 0;
        for (const auto& c : clusters) multi += c.members.size() > 1;
        std::cout << "key,value\nclusters," << clusters.size() << "\nmulti_member," << multi << "\n";
    }
    CLI::App* sub = nullptr;
};

struct Split {
    std::string manifest, clusters, out;
    std::size_t train = 1600, val = 400;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("split", "Train/validation split that keeps clusters together");
        s->add_option("--manifest", manifest, "Manifest CSV")->required();
        s->add_option("--clusters", clusters, "Cluster CSV; images not listed are singletons");
        s->add_option("--train", train, "Training images")->capture_default_str();
        s->add_option("--val", val, "Validation images")->capture_default_str();
        s->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
        s->add_option("--out", out, "Output split CSV")->required();
        sub = s;
    }

    void run() const {
        const auto parsed = catalog::parse_manifest(csv::read_file(manifest));
        std::vector<dedup::DuplicateCluster> cl;
        if (!clusters.empty()) cl = dedup::read_clusters(csv::read_file(clusters));
        std::set<std::string> covered;
        int next_id = 0;
        for (const auto& c : cl) {
            covered.insert(c.members.begin(), c.members.end());
            next_id = std::max(next_id, c.cluster_id + 1);
        }
        for (const auto& r : parsed.records) {
            if (!covered.count(r.image_id)) cl.push_back({next_id++, {r.image_id}});
        }
        const auto split = dedup::contamination_safe_split(parsed.records, cl, train, val, seed);
        emit(*sub, out, dedup::write_split(split));
        std::cout << "key,value\ntrain," << split.count(dedup::Side::train) << "\nval,"
                  << split.count(dedup::Side::val) << "\n";
    }
    CLI::App* sub = nullptr;
};

struct Augment {
    std::string image, id, out_dir, interp = "bilinear", fill = "edge";
    int count = 3;
    imageops::AugmentSpec spec;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("augment", "Write deterministic augmented replicas of one image");
        s->add_option("--image", image, "Input PNM")->required();
        s->add_option("--id", id, "Image id used to key the generator (default: file stem)");
        s->add_option("--count", count, "Number of replicas")->capture_default_str();
        s->add_option("--seed", spec.seed, "Augmentation seed")->capture_default_str();
        s->add_option("--shift", spec.shift_max_frac, "Maximum shift as a fraction of size")->capture_default_str();
        s->add_option("--zoom", spec.zoom_max_frac, "Maximum zoom deviation from 1")->capture_default_str();
        s->add_option("--rotation", spec.rotation_max_deg, "Maximum rotation in degrees")->capture_default_str();
        s->add_option("--hflip", spec.allow_hflip, "Allow horizontal flips")->capture_default_str();
        s->add_option("--vflip", spec.allow_vflip, "Allow vertical flips")->capture_default_str();
        s->add_option("--identity", spec.include_identity, "Replica 0 is the untouched image")
            ->capture_default_str();
        s->add_option("--interp", interp, "bilinear or nearest")
            ->check(CLI::IsMember({"bilinear", "nearest"}))
            ->capture_default_str();
        s->add_option("--fill", fill, "edge or zero")->check(CLI::IsMember({"edge", "zero"}))->capture_default_str();
        s->add_option("--out-dir", out_dir, "Output directory")->required();
        sub = s;
    }

    void run() const {
        spec.validate();
        if (count < 1) throw ValidationError("--count must be >= 1");
        const auto img = imageops::read_pnm(image);
        const std::string key = id.empty() ? fs::path(image).stem().string() : id;
        const auto ip = interp == "nearest" ? imageops::Interpolation::nearest : imageops::Interpolation::bilinear;
        const auto fl = fill == "zero" ? imageops::Fill::zero : imageops::Fill::edge;
        const auto replicas = imageops::generate_replicas(img, key, spec, count, ip, fl);

        fs::create_directories(out_dir);
        std::ostringstream table;
        csv::write_row(table, {"replica_idx", "file", "dx", "dy", "zoom", "angle_deg", "hflip", "vflip"});
        for (int i = 0; i < count; ++i) {
            const std::string file = key + "_" + std::to_string(i) + ".pnm";
            imageops::write_pnm((fs::path(out_dir) / file).string(), replicas[static_cast<std::size_t>(i)]);
            imageops::TransformParams p;
            if (!(spec.include_identity && i == 0)) p = imageops::sample_transform(spec, key, i, img.width(), img.height());
            csv::write_row(table, {std::to_string(i), file, csv::format_real(p.dx), csv::format_real(p.dy),
                                   csv::format_real(p.zoom), csv::format_real(p.angle_deg), p.hflip ? "1" : "0",
                                   p.vflip ? "1" : "0"});
        }
        emit(*sub, (fs::path(out_dir) / (key + "_transforms.csv")).string(), table.str());
    }
    CLI::App* sub = nullptr;
};

struct Pool {
    std::string predictions, mode = "mean", out;
    bool average = false;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("pool", "Pool replicas per (image, model), optionally average models");
        s->add_option("--predictions", predictions, "Prediction CSV")->required();
        s->add_option("--mode", mode, "mean or max")->check(CLI::IsMember({"mean", "max"}))->capture_default_str();
        s->add_option("--average-models", average, "Also average over models")->capture_default_str();
        s->add_option("--out", out, "Output CSV")->required();
        sub = s;
    }

    void run() const {
        const auto table = ensemble::PredictionTable::read_csv(csv::read_file(predictions));
        const auto pooled =
            ensemble::pool_replicas(table, mode == "max" ? ensemble::PoolMode::max : ensemble::PoolMode::mean);
        emit(*sub, out,
             average ? ensemble::write_averaged_csv(ensemble::average_models(pooled)) : ensemble::write_pooled_csv(pooled));
    }
    CLI::App* sub = nullptr;
};

struct EnsembleMasks {
    std::vector<std::string> masks;
    std::string out;
    std::optional<double> threshold;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("ensemble-masks", "Average probability masks pixelwise");
        s->add_option("--mask", masks, "Mask file (PGM scaled to [0,1], or .lkfp); repeat per model")->required();
        s->add_option("--threshold", threshold, "Binarize the average and write a PGM");
        s->add_option("--out", out, "Output .lkfp, or PGM with --threshold")->required();
        sub = s;
    }

    void run() const {
        std::vector<FloatPlane> stack;
        for (const auto& m : masks) stack.push_back(read_mask(m));
        const auto avg = ensemble::average_masks(stack);
        if (!threshold) {
            emit(*sub, out, imageops::encode_float_plane(avg));
            return;
        }
        const auto bin = ensemble::binarize(avg, *threshold);
        imageops::RasterImage img(bin.width(), bin.height(), 1);
        for (std::size_t i = 0; i < bin.size(); ++i) img.samples()[i] = bin.samples()[i] > 0.5 ? 255 : 0;
        emit(*sub, out, imageops::encode_pnm(img));
    }
    CLI::App* sub = nullptr;
};

struct StackTrain {
    std::string predictions, labels, out_mel, out_sk;
    StackFlags flags;
    stacker::SvmOptions svm;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("stack-train", "Train the melanoma and keratosis SVMs");
        s->add_option("--predictions", predictions, "Prediction CSV for the training images")->required();
        s->add_option("--labels", labels, "Label CSV: image_id,melanoma,seborrheic_keratosis")->required();
        flags.add_to(s);
        s->add_option("--lambda", svm.lambda, "Regularization strength")->capture_default_str();
        s->add_option("--epochs", svm.epochs, "Passes over the data")->capture_default_str();
        s->add_option("--svm-seed", svm.seed, "Shuffle seed for training")->capture_default_str();
        s->add_option("--out-mel", out_mel, "Output melanoma model")->required();
        s->add_option("--out-sk", out_sk, "Output keratosis model")->required();
        sub = s;
    }

    void run() const {
        const auto table = ensemble::PredictionTable::read_csv(csv::read_file(predictions));
        const auto layout = stacker::FeatureLayout::for_roster(table.model_ids());
        const auto models =
            stacker::train_stack(table, layout, stacker::read_labels(csv::read_file(labels)), flags.config(), svm);
        emit(*sub, out_mel, stacker::encode_model(models.melanoma));
        emit(*sub, out_sk, stacker::encode_model(models.keratosis));
    }
    CLI::App* sub = nullptr;
};

struct StackPredict {
    std::string mel_model, sk_model, predictions, out;
    StackFlags flags;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("stack-predict", "Score images with trained SVMs");
        s->add_option("--mel-model", mel_model, "Melanoma model")->required();
        s->add_option("--sk-model", sk_model, "Keratosis model")->required();
        s->add_option("--predictions", predictions, "Prediction CSV for the test images")->required();
        flags.add_to(s);
        s->add_option("--out", out, "Output score CSV")->required();
        sub = s;
    }

    void run() const {
        const auto mel = stacker::decode_model(csv::read_file(mel_model));
        const auto sk = stacker::decode_model(csv::read_file(sk_model));
        const auto table = ensemble::PredictionTable::read_csv(csv::read_file(predictions));
        emit(*sub, out, stacker::write_scores_csv(stacker::stack_predict(mel, sk, table, flags.config())));
    }
    CLI::App* sub = nullptr;
};

struct Eval {
    std::string pred, truth, scores, labels, history, policy = "on_decrease", out;
    std::optional<double> threshold;
    int patience = 1;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("eval", "Compute metrics and print metric,value rows");
        auto* p = s->add_option("--pred", pred, "Predicted mask (PGM or .lkfp)");
        auto* t = s->add_option("--truth", truth, "Ground-truth mask (PGM or .lkfp)");
        p->needs(t);
        t->needs(p);
        s->add_option("--threshold", threshold, "Binarize the predicted mask first")->needs(p);
        auto* sc = s->add_option("--scores", scores, "Score CSV: image_id,score_mel,score_sk");
        auto* lb = s->add_option("--labels", labels, "Label CSV for --scores");
        sc->needs(lb);
        lb->needs(sc);
        auto* h = s->add_option("--history", history, "Metric history CSV: epoch,value");
        s->add_option("--policy", policy, "on_decrease or on_no_increase")
            ->check(CLI::IsMember({"on_decrease", "on_no_increase"}))
            ->capture_default_str();
        s->add_option("--patience", patience, "Epochs of patience")->capture_default_str();
        p->excludes(sc)->excludes(h);
        sc->excludes(h);
        s->add_option("--out", out, "Also write the rows to this file");
        sub = s;
    }

    void run() const {
        std::vector<std::pair<std::string, double>> rows;
        if (!pred.empty()) {
            auto p = read_mask(pred);
            if (threshold) p = ensemble::binarize(p, *threshold);
            const auto t = read_mask(truth);
            rows = {{"dice", metrics::dice(p, t)}, {"jaccard", metrics::jaccard(p, t)}};
        } else if (!scores.empty()) {
            const auto lab = stacker::read_labels(csv::read_file(labels));
            const auto tbl = csv::Table::parse(csv::read_file(scores));
            tbl.require_columns({"image_id", "score_mel", "score_sk"});
            const auto ci = tbl.column("image_id"), cm = tbl.column("score_mel"), cs = tbl.column("score_sk");
            std::vector<metrics::ScoredLabel> mel, sk;
            for (const auto& r : tbl.rows()) {
                auto it = lab.find(r[ci]);
                if (it == lab.end()) throw ValidationError("no label for '" + r[ci] + "'");
                mel.push_back({csv::parse_real(r[cm], "score_mel"), it->second.melanoma});
                sk.push_back({csv::parse_real(r[cs], "score_sk"), it->second.keratosis});
            }
            rows = {{"auc_mel", metrics::auc(mel)}, {"auc_sk", metrics::auc(sk)}};
        } else if (!history.empty()) {
            const auto tbl = csv::Table::parse(csv::read_file(history));
            tbl.require_columns({"epoch", "value"});
            metrics::MetricHistory h;
            for (const auto& r : tbl.rows()) {
                h.add(static_cast<int>(csv::parse_integer(r[tbl.column("epoch")], "epoch")),
                      csv::parse_real(r[tbl.column("value")], "value"));
            }
            const metrics::StopPolicy sp{
                policy == "on_no_increase" ? metrics::StopKind::on_no_increase : metrics::StopKind::on_decrease,
                patience};
            const auto stop = metrics::early_stop(h, sp);
            rows = {{"stop_epoch", stop ? *stop : 0.0}};
        } else {
            throw UsageError("eval needs --pred/--truth, --scores/--labels or --history");
        }
        const auto text = metric_rows(rows);
        std::cout << text;
        if (!out.empty()) emit(*sub, out, text);
    }
    CLI::App* sub = nullptr;
};

struct Report {
    std::vector<std::string> tasks;
    std::string out, scatter;

    void add(CLI::App& app) {
        auto* s = app.add_subcommand("report", "Pearson R between internal and official AUCs per task");
        s->add_option("--task", tasks, "NAME=CSV with model_id,internal_auc,official_auc; repeat per task")
            ->required();
        s->add_option("--out", out, "Also write the summary to this file");
        s->add_option("--scatter", scatter, "Write the scatter points to this file");
        sub = s;
    }

    void run() const {
        std::ostringstream summary, points;
        csv::write_row(summary, {"task", "n", "pearson_r"});
        csv::write_row(points, {"task", "model_id", "internal_auc", "official_auc"});
        for (const auto& spec : tasks) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos || eq == 0) throw UsageError("--task expects NAME=CSV, got '" + spec + "'");
            const std::string name = spec.substr(0, eq);
            const auto tbl = csv::Table::parse(csv::read_file(spec.substr(eq + 1)));
            tbl.require_columns({"model_id", "internal_auc", "official_auc"});
            std::vector<double> xs, ys;
            for (const auto& r : tbl.rows()) {
                xs.push_back(csv::parse_real(r[tbl.column("internal_auc")], "internal_auc"));
                ys.push_back(csv::parse_real(r[tbl.column("official_auc")], "official_auc"));
                csv::write_row(points, {name, r[tbl.column("model_id")], csv::format_real(xs.back()),
                                        csv::format_real(ys.back())});
            }
            csv::write_row(summary,
                           {name, std::to_string(xs.size()), csv::format_real(metrics::pearson_r(xs, ys), 9)});
        }
        std::cout << summary.str();
        if (!out.empty()) emit(*sub, out, summary.str());
        if (!scatter.empty()) emit(*sub, scatter, points.str());
    }
    CLI::App* sub = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dataset curation, augmentation, metrics and ensembling for lesion images", "lesionkit"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    Assemble assemble;
    Dedup dedup_cmd;
    Cluster cluster;
    Split split;
    Augment augment;
    Pool pool;
    EnsembleMasks masks;
    StackTrain stack_train;
    StackPredict stack_predict;
    Eval eval;
    Report report;

    std::vector<std::pair<CLI::App**, std::function<void()>>> commands;
    std::string config_path;  // consumed by expand_config before parsing
    auto reg = [&](auto& cmd) {
        cmd.add(app);
        cmd.sub->add_option("--config", config_path, "key = value file; flags given on the command line take precedence");
        commands.emplace_back(&cmd.sub, [&cmd] { cmd.run(); });
    };
    reg(assemble);
    reg(dedup_cmd);
    reg(cluster);
    reg(split);
    reg(augment);
    reg(pool);
    reg(masks);
    reg(stack_train);
    reg(stack_predict);
    reg(eval);
    reg(report);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        if (!args.empty()) {
            if (auto* sub = app.get_subcommand_no_throw(args.front())) {
                auto rest = cli::expand_config(*sub, {args.begin() + 1, args.end()});
                args.resize(1);
                args.insert(args.end(), rest.begin(), rest.end());
            }
        }
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        for (auto& [sub, run] : commands) {
            if ((*sub)->parsed()) run();
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
