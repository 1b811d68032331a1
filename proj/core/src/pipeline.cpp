#include "lsplab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "lsplab/idx.hpp"
#include "lsplab/parallel.hpp"
#include "lsplab/serialize.hpp"

namespace lsplab {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_rate(double ar) {
    if (std::isinf(ar)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", ar);
    return buf;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

// -- config <-> json ---------------------------------------------------------

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd_momentum"},
            {"momentum", c.momentum}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
    TrainConfig c;
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    const std::string opt = doc.value("optimizer", std::string("adam"));
    c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd_momentum;
    c.momentum = doc.value("momentum", c.momentum);
    return c;
}

nlohmann::json reversal_config_to_json(const ReversalConfig& c) {
    return {{"lambda", c.lambda_weight},
            {"steps", c.steps},
            {"step_size", c.step_size},
            {"restarts", c.restarts},
            {"lambda_schedule",
             c.lambda_schedule == LambdaSchedule::fixed ? "fixed" : "adaptive"},
            {"optimizer",
             c.optimizer == ReversalOptimizer::line_search ? "line_search" : "adam"},
            {"batch_limit", c.batch_limit}};
}

ReversalConfig reversal_config_from_json(const nlohmann::json& doc) {
    ReversalConfig c;
    c.lambda_weight = doc.value("lambda", c.lambda_weight);
    c.steps = doc.value("steps", c.steps);
    c.step_size = doc.value("step_size", c.step_size);
    c.restarts = doc.value("restarts", c.restarts);
    c.lambda_schedule = doc.value("lambda_schedule", std::string("fixed")) == "fixed"
                            ? LambdaSchedule::fixed
                            : LambdaSchedule::adaptive;
    c.optimizer = doc.value("optimizer", std::string("line_search")) == "adam"
                      ? ReversalOptimizer::adam
                      : ReversalOptimizer::line_search;
    c.batch_limit = doc.value("batch_limit", c.batch_limit);
    return c;
}

nlohmann::json abs_config_to_json(const AbsConfig& c) {
    return {{"w1", c.w1},
            {"w2", c.w2},
            {"w3", c.w3},
            {"size_budget", c.size_budget},
            {"layer_index", c.layer_index},
            {"top_k_neurons", c.top_k_neurons},
            {"steps", c.steps},
            {"step_size", c.step_size},
            {"restarts", c.restarts},
            {"batch_limit", c.batch_limit},
            {"literal_ssim_sign", c.literal_ssim_sign},
            {"elevation_factor", c.elevation_factor},
            {"score_threshold", c.score_threshold}};
}

AbsConfig abs_config_from_json(const nlohmann::json& doc) {
    AbsConfig c;
    c.w1 = doc.value("w1", c.w1);
    c.w2 = doc.value("w2", c.w2);
    c.w3 = doc.value("w3", c.w3);
    c.size_budget = doc.value("size_budget", c.size_budget);
    c.layer_index = doc.value("layer_index", c.layer_index);
    c.top_k_neurons = doc.value("top_k_neurons", c.top_k_neurons);
    c.steps = doc.value("steps", c.steps);
    c.step_size = doc.value("step_size", c.step_size);
    c.restarts = doc.value("restarts", c.restarts);
    c.batch_limit = doc.value("batch_limit", c.batch_limit);
    c.literal_ssim_sign = doc.value("literal_ssim_sign", c.literal_ssim_sign);
    c.elevation_factor = doc.value("elevation_factor", c.elevation_factor);
    c.score_threshold = doc.value("score_threshold", c.score_threshold);
    return c;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc) {
    ExperimentConfig c;
    if (doc.contains("dataset")) {
        const auto& d = doc.at("dataset");
        c.dataset.kind = d.value("kind", std::string("synthetic")) == "idx"
                             ? DatasetSpec::Kind::idx
                             : DatasetSpec::Kind::synthetic;
        c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
        c.dataset.per_class = d.value("per_class", c.dataset.per_class);
        c.dataset.test_per_class = d.value("test_per_class", c.dataset.test_per_class);
        c.dataset.height = d.value("height", c.dataset.height);
        c.dataset.width = d.value("width", c.dataset.width);
        c.dataset.channels = d.value("channels", c.dataset.channels);
        c.dataset.train_images = d.value("train_images", std::string());
        c.dataset.train_labels = d.value("train_labels", std::string());
        c.dataset.test_images = d.value("test_images", std::string());
        c.dataset.test_labels = d.value("test_labels", std::string());
        c.dataset.subsample_per_class =
            d.value("subsample_per_class", c.dataset.subsample_per_class);
        c.dataset.test_subsample_per_class =
            d.value("test_subsample_per_class", c.dataset.test_subsample_per_class);
    }
    if (doc.contains("attack")) {
        const auto& a = doc.at("attack");
        c.attack.kind =
            trigger_kind_from_string(a.value("kind", std::string("patch")));
        c.attack.size_pixels = a.value("size_pixels", c.attack.size_pixels);
        c.attack.corner =
            corner_from_string(a.value("corner", std::string("bottom_right")));
        c.attack.value = a.value("value", c.attack.value);
        c.attack.position_jitter = a.value("position_jitter", c.attack.position_jitter);
        c.attack.color_jitter = a.value("color_jitter", c.attack.color_jitter);
        c.attack.blend_alpha = a.value("blend_alpha", c.attack.blend_alpha);
        if (a.contains("filter_scale"))
            c.attack.filter_scale = a.at("filter_scale").get<std::vector<double>>();
        if (a.contains("filter_shift"))
            c.attack.filter_shift = a.at("filter_shift").get<std::vector<double>>();
        c.attack.clean_label = a.value("clean_label", c.attack.clean_label);
        c.attack.poison_fraction = a.value("poison_fraction", c.attack.poison_fraction);
        if (a.contains("target_classes"))
            c.attack.target_classes = a.at("target_classes").get<std::vector<int>>();
    }
    if (doc.contains("zoo")) {
        const auto& z = doc.at("zoo");
        c.zoo.n_benign = z.value("n_benign", c.zoo.n_benign);
        c.zoo.n_baseline = z.value("n_baseline", c.zoo.n_baseline);
        c.zoo.n_lsp = z.value("n_lsp", c.zoo.n_lsp);
        c.zoo.sweep_replicas = z.value("sweep_replicas", c.zoo.sweep_replicas);
    }
    if (doc.contains("train")) c.train = train_config_from_json(doc.at("train"));
    if (doc.contains("defense")) {
        const auto& d = doc.at("defense");
        if (d.contains("nc")) c.defense.nc = reversal_config_from_json(d.at("nc"));
        c.defense.mad_threshold = d.value("mad_threshold", c.defense.mad_threshold);
        c.defense.benign_fpr_target =
            d.value("benign_fpr_target", c.defense.benign_fpr_target);
        c.defense.pilot_replicas = d.value("pilot_replicas", c.defense.pilot_replicas);
        c.defense.abs_enabled = d.value("abs_enabled", c.defense.abs_enabled);
        if (d.contains("abs")) c.defense.abs = abs_config_from_json(d.at("abs"));
    }
    if (doc.contains("ar_mode")) {
        const auto& m = doc.at("ar_mode");
        c.ar_mode.mode = m.value("mode", std::string("from_bound")) == "fixed"
                             ? ArModeSpec::Mode::fixed
                             : ArModeSpec::Mode::from_bound;
        c.ar_mode.fixed_value = m.value("value", c.ar_mode.fixed_value);
        c.ar_mode.safety_factor = m.value("safety_factor", c.ar_mode.safety_factor);
    }
    if (doc.contains("ar_sweep"))
        c.ar_sweep = doc.at("ar_sweep").get<std::vector<double>>();
    c.epsilon = doc.value("epsilon", c.epsilon);
    c.arch = doc.value("arch", c.arch);
    c.seed = doc.value("seed", c.seed);
    c.jobs = doc.value("jobs", c.jobs);
    return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json dataset = {
        {"kind", c.dataset.kind == DatasetSpec::Kind::idx ? "idx" : "synthetic"},
        {"num_classes", c.dataset.num_classes},
        {"per_class", c.dataset.per_class},
        {"test_per_class", c.dataset.test_per_class},
        {"height", c.dataset.height},
        {"width", c.dataset.width},
        {"channels", c.dataset.channels},
        {"train_images", c.dataset.train_images},
        {"train_labels", c.dataset.train_labels},
        {"test_images", c.dataset.test_images},
        {"test_labels", c.dataset.test_labels},
        {"subsample_per_class", c.dataset.subsample_per_class},
        {"test_subsample_per_class", c.dataset.test_subsample_per_class}};
    nlohmann::json attack = {{"kind", to_string(c.attack.kind)},
                             {"size_pixels", c.attack.size_pixels},
                             {"corner", to_string(c.attack.corner)},
                             {"value", c.attack.value},
                             {"position_jitter", c.attack.position_jitter},
                             {"color_jitter", c.attack.color_jitter},
                             {"blend_alpha", c.attack.blend_alpha},
                             {"filter_scale", c.attack.filter_scale},
                             {"filter_shift", c.attack.filter_shift},
                             {"clean_label", c.attack.clean_label},
                             {"poison_fraction", c.attack.poison_fraction},
                             {"target_classes", c.attack.target_classes}};
    nlohmann::json zoo = {{"n_benign", c.zoo.n_benign},
                          {"n_baseline", c.zoo.n_baseline},
                          {"n_lsp", c.zoo.n_lsp},
                          {"sweep_replicas", c.zoo.sweep_replicas}};
    nlohmann::json defense = {{"nc", reversal_config_to_json(c.defense.nc)},
                              {"mad_threshold", c.defense.mad_threshold},
                              {"benign_fpr_target", c.defense.benign_fpr_target},
                              {"pilot_replicas", c.defense.pilot_replicas},
                              {"abs_enabled", c.defense.abs_enabled},
                              {"abs", abs_config_to_json(c.defense.abs)}};
    nlohmann::json ar_mode = {
        {"mode", c.ar_mode.mode == ArModeSpec::Mode::fixed ? "fixed" : "from_bound"},
        {"value", c.ar_mode.fixed_value},
        {"safety_factor", c.ar_mode.safety_factor}};
    return {{"dataset", dataset},
            {"attack", attack},
            {"zoo", zoo},
            {"train", train_config_to_json(c.train)},
            {"defense", defense},
            {"ar_mode", ar_mode},
            {"ar_sweep", c.ar_sweep},
            {"epsilon", c.epsilon},
            {"arch", c.arch},
            {"seed", c.seed},
            {"jobs", c.jobs}};
}

// -- pipeline ----------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig config, std::filesystem::path out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)) {
    std::filesystem::create_directories(out_dir_);
    io::write_json(out_dir_ / "config.json", experiment_config_to_json(config_));
}

const std::vector<std::string>& Pipeline::cli_stages() {
    static const std::vector<std::string> stages = {
        "gen-data", "train-zoo", "pilot-defense", "plan-ar",
        "defend",   "evaluate",  "report"};
    return stages;
}

std::uint64_t Pipeline::stream_seed(const std::string& label) const {
    return Rng(config_.seed).split(fnv1a64(label)).next_u64();
}

std::vector<LayerSpec> Pipeline::arch_layers() const {
    return arch_preset(config_.arch, config_.dataset.num_classes);
}

std::string Pipeline::stage_hash(const std::string& stage) const {
    auto manifest_hash = [this](const std::string& upstream) -> std::string {
        const auto path = out_dir_ / "manifest.json";
        if (!std::filesystem::exists(path)) return "";
        const auto manifest = io::read_json(path);
        if (!manifest.contains("stages") || !manifest["stages"].contains(upstream))
            return "";
        return manifest["stages"][upstream].value("hash", "");
    };

    nlohmann::json payload;
    std::vector<std::string> upstream;
    const auto full = experiment_config_to_json(config_);
    if (stage == "gen-data") {
        payload = {{"dataset", full["dataset"]}, {"seed", config_.seed}};
    } else if (stage == "train-benign") {
        payload = {{"train", full["train"]},
                   {"arch", config_.arch},
                   {"n", config_.zoo.n_benign},
                   {"seed", config_.seed}};
        upstream = {"gen-data"};
    } else if (stage == "train-baseline") {
        payload = {{"train", full["train"]},
                   {"arch", config_.arch},
                   {"attack", full["attack"]},
                   {"n", config_.zoo.n_baseline},
                   {"seed", config_.seed}};
        upstream = {"gen-data"};
    } else if (stage == "pilot-defense") {
        payload = {{"nc", full["defense"]["nc"]},
                   {"pilot_replicas", config_.defense.pilot_replicas}};
        upstream = {"train-benign", "train-baseline"};
    } else if (stage == "plan-ar") {
        payload = {{"ar_mode", full["ar_mode"]}, {"epsilon", config_.epsilon}};
        if (config_.ar_mode.mode == ArModeSpec::Mode::from_bound)
            upstream = {"pilot-defense"};
    } else if (stage == "train-lsp") {
        payload = {{"train", full["train"]},
                   {"arch", config_.arch},
                   {"attack", full["attack"]},
                   {"n", config_.zoo.n_lsp},
                   {"ar_sweep", config_.ar_sweep},
                   {"sweep_replicas", config_.zoo.sweep_replicas},
                   {"seed", config_.seed}};
        upstream = {"gen-data", "plan-ar"};
    } else if (stage == "defend") {
        payload = {{"defense", full["defense"]}};
        upstream = {"train-benign", "train-baseline", "train-lsp"};
    } else if (stage == "evaluate") {
        payload = {{"benign_fpr_target", config_.defense.benign_fpr_target}};
        upstream = {"defend"};
    } else if (stage == "report") {
        payload = nlohmann::json::object();
        upstream = {"evaluate"};
    } else {
        throw StageError(stage, "unknown stage");
    }

    std::string blob = stage + "|" + payload.dump();
    for (const auto& u : upstream) blob += "|" + u + "=" + manifest_hash(u);
    return hex64(fnv1a64(blob));
}

bool Pipeline::up_to_date(const std::string& stage, const std::string& hash) const {
    const auto path = out_dir_ / "manifest.json";
    if (!std::filesystem::exists(path)) return false;
    const auto manifest = io::read_json(path);
    if (!manifest.contains("stages") || !manifest["stages"].contains(stage))
        return false;
    const auto& entry = manifest["stages"][stage];
    return entry.value("hash", "") == hash &&
           (entry.value("status", "") == "done" ||
            entry.value("status", "") == "skipped");
}

void Pipeline::mark_done(const std::string& stage, const std::string& hash) {
    const auto path = out_dir_ / "manifest.json";
    nlohmann::json manifest = std::filesystem::exists(path)
                                  ? io::read_json(path)
                                  : nlohmann::json{{"stages", nlohmann::json::object()}};
    manifest["stages"][stage] = {{"hash", hash}, {"status", "done"}};
    io::write_json(path, manifest);
}

void Pipeline::mark_skipped(const std::string& stage, const std::string& hash) {
    const auto path = out_dir_ / "manifest.json";
    nlohmann::json manifest = std::filesystem::exists(path)
                                  ? io::read_json(path)
                                  : nlohmann::json{{"stages", nlohmann::json::object()}};
    manifest["stages"][stage] = {{"hash", hash}, {"status", "skipped"}};
    io::write_json(path, manifest);
}

TriggerSpec Pipeline::build_trigger() const {
    const auto& d = config_.dataset;
    const auto& a = config_.attack;
    // idx datasets carry their own dims; read them from the generated data.
    int h = d.height, w = d.width, c = d.channels;
    const auto train_dir = out_dir_ / "data" / "train";
    if (std::filesystem::exists(train_dir / "manifest.json")) {
        const auto m = io::read_json(train_dir / "manifest.json");
        h = m.at("height").get<int>();
        w = m.at("width").get<int>();
        c = m.at("channels").get<int>();
    }
    switch (a.kind) {
        case TriggerKind::patch:
            return make_badnets_spec(h, w, c, a.size_pixels, a.corner, a.value);
        case TriggerKind::random_patch:
            return make_random_square_spec(h, w, c, a.size_pixels, a.corner, a.value,
                                           a.position_jitter, a.color_jitter,
                                           stream_seed("trigger"));
        case TriggerKind::blend:
            return make_blend_spec(procedural_watermark(h, w, c, stream_seed("trigger")),
                                   a.blend_alpha);
        case TriggerKind::filter: {
            std::vector<double> scale = a.filter_scale, shift = a.filter_shift;
            if (scale.empty()) scale.assign(static_cast<std::size_t>(c), 0.7);
            if (shift.empty()) shift.assign(static_cast<std::size_t>(c), 0.25);
            return make_filter_spec(h, w, std::move(scale), std::move(shift));
        }
    }
    throw std::logic_error("unknown trigger kind");
}

PoisonConfig Pipeline::poison_config_for(int target_class, double attack_rate) const {
    PoisonConfig pc;
    pc.target_class = target_class;
    pc.attack_rate = attack_rate;
    pc.poison_fraction = config_.attack.poison_fraction;
    pc.clean_label = config_.attack.clean_label;
    pc.trigger = trigger_from_json(io::read_json(out_dir_ / "trigger.json"));
    return pc;
}

double Pipeline::planned_attack_rate() const {
    if (config_.ar_mode.mode == ArModeSpec::Mode::fixed)
        return config_.ar_mode.fixed_value;
    const auto plan_path = out_dir_ / "plan.json";
    if (!std::filesystem::exists(plan_path))
        throw StageError("train-lsp", "plan-ar has not run yet (missing plan.json)");
    const auto plan = io::read_json(plan_path);
    const auto& ar = plan.at("deployed_ar");
    return ar.is_string() ? std::numeric_limits<double>::infinity()
                          : ar.get<double>();
}

std::vector<ZooEntry> Pipeline::plan_group_entries(const std::string& group) const {
    const auto& targets = config_.attack.target_classes;
    std::vector<ZooEntry> entries;
    auto make_id = [](const std::string& prefix, int i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s_%02d", prefix.c_str(), i);
        return std::string(buf);
    };
    if (group == "benign") {
        for (int i = 0; i < config_.zoo.n_benign; ++i)
            entries.push_back({make_id("benign", i), "benign", false, -1, 0.0});
    } else if (group == "baseline") {
        for (int i = 0; i < config_.zoo.n_baseline; ++i)
            entries.push_back({make_id("baseline", i), "baseline", true,
                               targets[i % targets.size()],
                               std::numeric_limits<double>::infinity()});
    } else if (group == "lsp") {
        const double ar = planned_attack_rate();
        for (int i = 0; i < config_.zoo.n_lsp; ++i)
            entries.push_back({make_id("lsp", i), "lsp", true,
                               targets[i % targets.size()], ar});
        for (std::size_t s = 0; s < config_.ar_sweep.size(); ++s) {
            for (int i = 0; i < config_.zoo.sweep_replicas; ++i) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "sweep%zu_%02d", s, i);
                entries.push_back({buf, "sweep", true, targets[i % targets.size()],
                                   config_.ar_sweep[s]});
            }
        }
    } else {
        throw StageError("train-zoo", "unknown group " + group);
    }
    return entries;
}

std::vector<ZooEntry> Pipeline::zoo_entries() const {
    const auto path = out_dir_ / "zoo.json";
    if (!std::filesystem::exists(path)) return {};
    std::vector<ZooEntry> entries;
    for (const auto& e : io::read_json(path).at("entries")) {
        ZooEntry entry;
        entry.id = e.at("id").get<std::string>();
        entry.group = e.at("group").get<std::string>();
        entry.backdoored = e.at("backdoored").get<bool>();
        entry.target_class = e.at("target_class").get<int>();
        const auto& ar = e.at("attack_rate");
        entry.attack_rate = ar.is_string() ? std::numeric_limits<double>::infinity()
                                           : ar.get<double>();
        entries.push_back(std::move(entry));
    }
    return entries;
}

namespace {

void save_zoo_entries(const std::filesystem::path& out_dir,
                      const std::vector<ZooEntry>& keep_existing_groups,
                      const std::vector<ZooEntry>& fresh) {
    nlohmann::json list = nlohmann::json::array();
    auto emit = [&list](const ZooEntry& e) {
        nlohmann::json doc = {{"id", e.id},
                              {"group", e.group},
                              {"backdoored", e.backdoored},
                              {"target_class", e.target_class}};
        if (std::isinf(e.attack_rate))
            doc["attack_rate"] = "inf";
        else
            doc["attack_rate"] = e.attack_rate;
        list.push_back(doc);
    };
    for (const auto& e : keep_existing_groups) emit(e);
    for (const auto& e : fresh) emit(e);
    io::write_json(out_dir / "zoo.json", {{"entries", list}});
}

}  // namespace

void Pipeline::stage_gen_data() {
    const std::string hash = stage_hash("gen-data");
    if (up_to_date("gen-data", hash)) return;

    LabeledDataset train_pool, test_set;
    if (config_.dataset.kind == DatasetSpec::Kind::synthetic) {
        const auto& d = config_.dataset;
        train_pool = generate_synthetic_dataset(d.num_classes, d.per_class, d.height,
                                                d.width,
                                                RngSeed{stream_seed("data/train")},
                                                d.channels);
        test_set = generate_synthetic_dataset(d.num_classes, d.test_per_class,
                                              d.height, d.width,
                                              RngSeed{stream_seed("data/test")},
                                              d.channels);
    } else {
        train_pool = load_idx_dataset(config_.dataset.train_images,
                                      config_.dataset.train_labels);
        test_set = load_idx_dataset(config_.dataset.test_images,
                                    config_.dataset.test_labels);
        auto subsample = [this](LabeledDataset& data, int per_class,
                                const std::string& label) {
            if (per_class <= 0) return;
            Rng rng(stream_seed(label));
            rng.shuffle(data.samples);
            std::vector<int> kept(static_cast<std::size_t>(data.num_classes), 0);
            LabeledDataset out;
            out.num_classes = data.num_classes;
            out.split_tag = data.split_tag;
            for (auto& sample : data.samples) {
                const int cls = sample.second.argmax();
                if (kept[static_cast<std::size_t>(cls)] >= per_class) continue;
                ++kept[static_cast<std::size_t>(cls)];
                out.samples.push_back(std::move(sample));
            }
            data = std::move(out);
        };
        subsample(train_pool, config_.dataset.subsample_per_class, "data/subsample");
        subsample(test_set, config_.dataset.test_subsample_per_class,
                  "data/subsample-test");
    }

    // Shuffle so that any head slice is class-mixed.
    Rng(stream_seed("data/shuffle-train")).shuffle(train_pool.samples);
    Rng(stream_seed("data/shuffle-test")).shuffle(test_set.samples);
    test_set.split_tag = SplitTag::test;

    save_dataset(train_pool, out_dir_ / "data" / "train", config_.seed);
    save_dataset(test_set, out_dir_ / "data" / "test", config_.seed);

    io::write_json(out_dir_ / "trigger.json", trigger_to_json(build_trigger()));
    mark_done("gen-data", hash);
}

void Pipeline::stage_train_group(const std::string& group) {
    const std::string stage = "train-" + group;
    const std::string hash = stage_hash(stage);
    if (up_to_date(stage, hash)) return;

    const LabeledDataset pool = load_dataset(out_dir_ / "data" / "train");
    const auto arch = arch_layers();
    const Shape3 shape{pool.height(), pool.width(), pool.channels()};
    auto entries = plan_group_entries(group);

    parallel_for(config_.jobs, static_cast<int>(entries.size()), [&](int idx) {
        const ZooEntry& entry = entries[static_cast<std::size_t>(idx)];
        Classifier model(shape, pool.num_classes, arch,
                         RngSeed{stream_seed("model/" + entry.id)});

        TrainConfig tc = config_.train;
        tc.seed = RngSeed{stream_seed("train/" + entry.id)};

        LabeledDataset train_set;
        if (!entry.backdoored) {
            train_set = pool;
        } else {
            auto [benign, poison_src] = split_for_poisoning(
                pool, config_.attack.poison_fraction,
                RngSeed{stream_seed("split/" + entry.id)});
            const PoisonConfig pc =
                poison_config_for(entry.target_class, entry.attack_rate);
            LabeledDataset poisoned =
                poison_dataset(poison_src, pc, RngSeed{stream_seed("poison/" + entry.id)});
            train_set = std::move(benign);
            for (auto& s : poisoned.samples) train_set.samples.push_back(std::move(s));
            if (pc.clean_label) {
                // clean-label mode stamps only target-class samples; the
                // rest of the poison source stays in training untouched.
                for (auto& s : poison_src.samples)
                    if (s.second.argmax() != entry.target_class)
                        train_set.samples.push_back(std::move(s));
            }
        }

        Classifier trained = train(model, train_set, tc);
        nlohmann::json metadata = {{"id", entry.id},
                                   {"group", entry.group},
                                   {"target_class", entry.target_class},
                                   {"seed", stream_seed("model/" + entry.id)}};
        if (std::isinf(entry.attack_rate))
            metadata["attack_rate"] = "inf";
        else
            metadata["attack_rate"] = entry.attack_rate;
        trained.save(out_dir_ / "models" / entry.id, metadata);
    });

    // merge into the zoo registry, replacing this group's entries
    std::vector<ZooEntry> existing;
    for (const auto& e : zoo_entries()) {
        const bool replaced =
            std::any_of(entries.begin(), entries.end(),
                        [&](const ZooEntry& n) { return n.id == e.id; });
        if (!replaced) existing.push_back(e);
    }
    save_zoo_entries(out_dir_, existing, entries);
    mark_done(stage, hash);
}

void Pipeline::stage_pilot_defense() {
    const std::string hash = stage_hash("pilot-defense");
    if (config_.ar_mode.mode == ArModeSpec::Mode::fixed) {
        mark_skipped("pilot-defense", hash);
        return;
    }
    if (up_to_date("pilot-defense", hash)) return;

    const LabeledDataset test_set = load_dataset(out_dir_ / "data" / "test");

    std::set<int> targets_used;
    for (const auto& e : plan_group_entries("baseline")) targets_used.insert(e.target_class);

    const int nb = std::min(config_.defense.pilot_replicas, config_.zoo.n_benign);
    const int np = std::min(config_.defense.pilot_replicas, config_.zoo.n_baseline);

    struct Job {
        std::string model_id;
        int target;
        bool benign;
    };
    std::vector<Job> jobs;
    for (int i = 0; i < nb; ++i) {
        char id[64];
        std::snprintf(id, sizeof(id), "benign_%02d", i);
        for (int t : targets_used) jobs.push_back({id, t, true});
    }
    const auto baseline_entries = plan_group_entries("baseline");
    for (int i = 0; i < np; ++i)
        jobs.push_back({baseline_entries[static_cast<std::size_t>(i)].id,
                        baseline_entries[static_cast<std::size_t>(i)].target_class,
                        false});

    std::vector<nlohmann::json> results(jobs.size());
    parallel_for(config_.jobs, static_cast<int>(jobs.size()), [&](int idx) {
        const Job& job = jobs[static_cast<std::size_t>(idx)];
        const Classifier model = Classifier::load(out_dir_ / "models" / job.model_id);
        ReversalConfig rc = config_.defense.nc;
        rc.seed = stream_seed("pilot/" + job.model_id + "/" + std::to_string(job.target));
        const ReversalResult r = reverse_trigger_nc(model, job.target, test_set, rc);
        nlohmann::json doc = reversal_result_to_json(r);
        doc["model"] = job.model_id;
        doc["benign"] = job.benign;
        results[static_cast<std::size_t>(idx)] = std::move(doc);
    });

    nlohmann::json pilot = {{"benign", nlohmann::json::array()},
                            {"poisoned", nlohmann::json::array()}};
    for (std::size_t i = 0; i < jobs.size(); ++i)
        pilot[jobs[i].benign ? "benign" : "poisoned"].push_back(results[i]);
    io::write_json(out_dir_ / "pilot" / "pilot.json", pilot);
    mark_done("pilot-defense", hash);
}

void Pipeline::stage_plan_ar() {
    const std::string hash = stage_hash("plan-ar");
    if (up_to_date("plan-ar", hash)) return;

    nlohmann::json plan;
    double deployed = 0.0;
    bool feasible = false;
    if (config_.ar_mode.mode == ArModeSpec::Mode::fixed) {
        deployed = config_.ar_mode.fixed_value;
        feasible = deployed > 1.0;
        plan = {{"mode", "fixed"}, {"feasible", feasible}};
    } else {
        const auto pilot = io::read_json(out_dir_ / "pilot" / "pilot.json");
        std::map<int, std::vector<ReversalResult>> benign_by_class, poisoned_by_class;
        for (const auto& doc : pilot.at("benign")) {
            ReversalResult r = reversal_result_from_json(doc);
            benign_by_class[r.target_class].push_back(std::move(r));
        }
        for (const auto& doc : pilot.at("poisoned")) {
            ReversalResult r = reversal_result_from_json(doc);
            poisoned_by_class[r.target_class].push_back(std::move(r));
        }

        const int k = config_.dataset.num_classes;
        nlohmann::json per_target = nlohmann::json::object();
        CompensatoryBound chosen;
        bool have = false;
        for (const auto& [target, poisoned_runs] : poisoned_by_class) {
            auto it = benign_by_class.find(target);
            if (it == benign_by_class.end()) continue;
            const CompensatoryBound b =
                plan_attack_averaged(it->second, poisoned_runs, config_.epsilon, k);
            per_target[std::to_string(target)] = bound_to_json(b);
            // The largest bound (smallest rate) is safe for every target.
            if (!have || b.ce_lower_bound > chosen.ce_lower_bound) {
                chosen = b;
                have = true;
            }
        }
        if (!have)
            throw StageError("plan-ar", "pilot runs do not cover any target class");
        deployed = apply_safety_factor(chosen.max_attack_rate,
                                       config_.ar_mode.safety_factor);
        feasible = chosen.feasible && deployed > 1.0;
        plan = bound_to_json(chosen);
        plan["mode"] = "from_bound";
        plan["per_target"] = per_target;
        plan["safety_factor"] = config_.ar_mode.safety_factor;
        plan["feasible"] = feasible;
    }

    if (std::isinf(deployed))
        plan["deployed_ar"] = "inf";
    else
        plan["deployed_ar"] = deployed;
    plan["attack_infeasible"] = !feasible;
    if (!feasible)
        std::fprintf(stderr,
                     "warning: attack infeasible (deployed rate %s is not > 1)\n",
                     format_rate(deployed).c_str());
    io::write_json(out_dir_ / "plan.json", plan);
    mark_done("plan-ar", hash);
}

void Pipeline::stage_defend() {
    const std::string hash = stage_hash("defend");
    if (up_to_date("defend", hash)) return;

    const LabeledDataset test_set = load_dataset(out_dir_ / "data" / "test");
    const auto entries = zoo_entries();
    if (entries.empty()) throw StageError("defend", "zoo is empty; train models first");

    std::filesystem::create_directories(out_dir_ / "defense");
    parallel_for(config_.jobs, static_cast<int>(entries.size()), [&](int idx) {
        const ZooEntry& entry = entries[static_cast<std::size_t>(idx)];
        const Classifier model = Classifier::load(out_dir_ / "models" / entry.id);

        DetectConfig dc;
        dc.method = DetectionMethod::nc;
        dc.nc = config_.defense.nc;
        dc.nc.seed = stream_seed("defense/" + entry.id);
        dc.mad_threshold = config_.defense.mad_threshold;
        dc.jobs = 1;  // parallelism is across models here
        const DetectOutcome outcome = detect_full(model, test_set, dc);

        nlohmann::json per_class = nlohmann::json::array();
        const auto artifact_dir = out_dir_ / "defense" / entry.id;
        std::filesystem::create_directories(artifact_dir);
        for (const auto& r : outcome.per_class) {
            per_class.push_back(reversal_result_to_json(r));
            char name[64];
            std::snprintf(name, sizeof(name), "mask_class%02d.f32", r.target_class);
            io::write_f32(artifact_dir / name, r.mask);
            std::snprintf(name, sizeof(name), "pattern_class%02d.f32", r.target_class);
            io::write_f32(artifact_dir / name, r.pattern.data);
        }
        nlohmann::json doc = {{"id", entry.id},
                              {"verdict", verdict_to_json(outcome.verdict)},
                              {"per_class", per_class}};
        io::write_json(out_dir_ / "defense" / (entry.id + ".json"), doc);

        if (config_.defense.abs_enabled) {
            DetectConfig ac;
            ac.method = DetectionMethod::abs;
            ac.abs = config_.defense.abs;
            ac.abs.seed = stream_seed("defense-abs/" + entry.id);
            ac.jobs = 1;
            const DetectOutcome abs_outcome = detect_full(model, test_set, ac);
            nlohmann::json abs_per_class = nlohmann::json::array();
            for (const auto& r : abs_outcome.per_class)
                abs_per_class.push_back(reversal_result_to_json(r));
            io::write_json(out_dir_ / "defense" / (entry.id + ".abs.json"),
                           {{"id", entry.id},
                            {"verdict", verdict_to_json(abs_outcome.verdict)},
                            {"per_class", abs_per_class}});
        }
    });
    mark_done("defend", hash);
}

void Pipeline::stage_evaluate() {
    const std::string hash = stage_hash("evaluate");
    if (up_to_date("evaluate", hash)) return;

    const LabeledDataset test_set = load_dataset(out_dir_ / "data" / "test");
    const auto entries = zoo_entries();
    const TriggerSpec trigger =
        trigger_from_json(io::read_json(out_dir_ / "trigger.json"));
    const bool patch_like = trigger.kind == TriggerKind::patch ||
                            trigger.kind == TriggerKind::random_patch;

    std::vector<nlohmann::json> rows(entries.size());
    parallel_for(config_.jobs, static_cast<int>(entries.size()), [&](int idx) {
        const ZooEntry& entry = entries[static_cast<std::size_t>(idx)];
        const Classifier model = Classifier::load(out_dir_ / "models" / entry.id);
        const auto defense =
            io::read_json(out_dir_ / "defense" / (entry.id + ".json"));
        const auto verdict = verdict_from_json(defense.at("verdict"));

        nlohmann::json row = {{"id", entry.id},
                              {"group", entry.group},
                              {"target_class", entry.target_class},
                              {"attack_kind", to_string(trigger.kind)},
                              {"benign_accuracy", benign_accuracy(model, test_set)},
                              {"score_for_ap", verdict.score_for_ap},
                              {"is_backdoored_raw", verdict.is_backdoored},
                              {"per_class_norms", verdict.per_class_scores}};
        if (std::isinf(entry.attack_rate))
            row["attack_rate"] = "inf";
        else
            row["attack_rate"] = entry.attack_rate;

        if (entry.backdoored) {
            TriggerSpec t = trigger;
            t.seed = stream_seed("asr/" + entry.id);
            row["attack_success_rate"] =
                attack_success_rate(model, test_set, t, entry.target_class);
            if (patch_like) {
                const ReversalResult reversed = reversal_result_from_json(
                    defense.at("per_class")[static_cast<std::size_t>(
                        entry.target_class)]);
                row["reattack_success_rate"] = reattack_success_rate(
                    model, test_set, trigger.ground_truth_mask(), reversed.mask,
                    reversed.pattern, entry.target_class);
                row["target_norm"] = reversed.l1_norm;
            }
        }
        rows[static_cast<std::size_t>(idx)] = std::move(row);
    });

    // Calibrated MAD threshold: the smallest per-model score that keeps the
    // benign false-positive rate at or below the target.
    std::vector<double> benign_scores;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].group == "benign")
            benign_scores.push_back(rows[i].at("score_for_ap").get<double>());
    double calibrated = config_.defense.mad_threshold;
    if (!benign_scores.empty()) {
        std::sort(benign_scores.begin(), benign_scores.end(), std::greater<double>());
        const std::size_t allowed = static_cast<std::size_t>(
            std::floor(config_.defense.benign_fpr_target *
                       static_cast<double>(benign_scores.size())));
        const double floor_threshold =
            allowed < benign_scores.size() ? benign_scores[allowed] : 0.0;
        calibrated = std::max(config_.defense.mad_threshold, floor_threshold);
    }
    for (auto& row : rows)
        row["is_backdoored_calibrated"] =
            row.at("score_for_ap").get<double>() > calibrated;

    auto detection_pair = [&](const std::string& positive_group) {
        std::vector<std::pair<DetectionVerdict, bool>> verdicts;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& g = entries[i].group;
            if (g != "benign" && g != positive_group) continue;
            DetectionVerdict v;
            v.score_for_ap = rows[i].at("score_for_ap").get<double>();
            v.is_backdoored = rows[i].at("is_backdoored_calibrated").get<bool>();
            verdicts.push_back({v, entries[i].group == positive_group});
        }
        auto [acc, ap] = detection_metrics(verdicts);
        int raw_correct = 0;
        for (std::size_t i = 0, j = 0; i < entries.size(); ++i) {
            const auto& g = entries[i].group;
            if (g != "benign" && g != positive_group) continue;
            const bool raw = rows[i].at("is_backdoored_raw").get<bool>();
            if (raw == (g == positive_group)) ++raw_correct;
            ++j;
        }
        return nlohmann::json{
            {"acc_calibrated", acc},
            {"acc_raw", static_cast<double>(raw_correct) /
                            static_cast<double>(verdicts.size())},
            {"ap", ap},
            {"n", verdicts.size()}};
    };

    nlohmann::json groups = nlohmann::json::object();
    for (const auto& group : {"benign", "baseline", "lsp", "sweep"}) {
        double ba = 0, asr = 0, reasr = 0;
        int n = 0, n_asr = 0, n_reasr = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].group != group) continue;
            ++n;
            ba += rows[i].at("benign_accuracy").get<double>();
            if (rows[i].contains("attack_success_rate")) {
                asr += rows[i].at("attack_success_rate").get<double>();
                ++n_asr;
            }
            if (rows[i].contains("reattack_success_rate")) {
                reasr += rows[i].at("reattack_success_rate").get<double>();
                ++n_reasr;
            }
        }
        if (n == 0) continue;
        nlohmann::json g = {{"n", n}, {"mean_benign_accuracy", ba / n}};
        if (n_asr) g["mean_attack_success_rate"] = asr / n_asr;
        if (n_reasr) g["mean_reattack_success_rate"] = reasr / n_reasr;
        groups[group] = g;
    }

    nlohmann::json summary = {{"groups", groups},
                              {"calibrated_threshold", calibrated}};
    bool have_baseline = groups.contains("baseline"), have_lsp = groups.contains("lsp");
    if (groups.contains("benign")) {
        if (have_baseline) summary["detection_baseline"] = detection_pair("baseline");
        if (have_lsp) summary["detection_lsp"] = detection_pair("lsp");
    }
    if (std::filesystem::exists(out_dir_ / "plan.json"))
        summary["plan"] = io::read_json(out_dir_ / "plan.json");

    nlohmann::json entries_doc = nlohmann::json::object();
    for (const auto& row : rows) entries_doc[row.at("id").get<std::string>()] = row;
    io::write_json(out_dir_ / "metrics" / "entries.json", entries_doc);
    io::write_json(out_dir_ / "metrics" / "summary.json", summary);

    // per-model CSV
    std::string csv =
        "id,group,attack_kind,target_class,attack_rate,benign_accuracy,"
        "attack_success_rate,reattack_success_rate,target_norm,min_norm,"
        "anomaly_score,verdict\n";
    for (const auto& row : rows) {
        char line[512];
        const auto norms = row.at("per_class_norms").get<std::vector<double>>();
        const double min_norm = *std::min_element(norms.begin(), norms.end());
        std::snprintf(
            line, sizeof(line), "%s,%s,%s,%d,%s,%.6f,%s,%s,%s,%.6f,%.6f,%s\n",
            row.at("id").get<std::string>().c_str(),
            row.at("group").get<std::string>().c_str(),
            row.at("attack_kind").get<std::string>().c_str(),
            row.at("target_class").get<int>(),
            row.at("attack_rate").is_string()
                ? "inf"
                : std::to_string(row.at("attack_rate").get<double>()).c_str(),
            row.at("benign_accuracy").get<double>(),
            row.contains("attack_success_rate")
                ? std::to_string(row.at("attack_success_rate").get<double>()).c_str()
                : "",
            row.contains("reattack_success_rate")
                ? std::to_string(row.at("reattack_success_rate").get<double>()).c_str()
                : "",
            row.contains("target_norm")
                ? std::to_string(row.at("target_norm").get<double>()).c_str()
                : "",
            min_norm, row.at("score_for_ap").get<double>(),
            row.at("is_backdoored_calibrated").get<bool>() ? "backdoored" : "clean");
        csv += line;
    }
    io::write_text(out_dir_ / "metrics" / "models.csv", csv);
    mark_done("evaluate", hash);
}

void Pipeline::stage_report() {
    const std::string hash = stage_hash("report");
    if (up_to_date("report", hash)) return;
    report_tables(out_dir_);
    mark_done("report", hash);
}

nlohmann::json Pipeline::summary() const {
    const auto path = out_dir_ / "metrics" / "summary.json";
    if (!std::filesystem::exists(path))
        throw StageError("evaluate", "summary.json missing; run evaluate first");
    return io::read_json(path);
}

void Pipeline::run_stage(const std::string& name) {
    try {
        if (name == "gen-data") {
            stage_gen_data();
        } else if (name == "train-zoo") {
            stage_train_group("benign");
            stage_train_group("baseline");
            const bool can_lsp = config_.ar_mode.mode == ArModeSpec::Mode::fixed ||
                                 std::filesystem::exists(out_dir_ / "plan.json");
            if (can_lsp) stage_train_group("lsp");
        } else if (name == "pilot-defense") {
            stage_pilot_defense();
        } else if (name == "plan-ar") {
            stage_plan_ar();
        } else if (name == "defend") {
            stage_defend();
        } else if (name == "evaluate") {
            stage_evaluate();
        } else if (name == "report") {
            stage_report();
        } else {
            throw StageError(name, "unknown stage");
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

void Pipeline::run_all() {
    run_stage("gen-data");
    try {
        stage_train_group("benign");
        stage_train_group("baseline");
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("train-zoo", e.what());
    }
    run_stage("pilot-defense");
    run_stage("plan-ar");
    try {
        stage_train_group("lsp");
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("train-zoo", e.what());
    }
    run_stage("defend");
    run_stage("evaluate");
    run_stage("report");
}

// -- report ------------------------------------------------------------------

std::filesystem::path report_tables(const std::filesystem::path& out_dir) {
    const auto metrics_dir = out_dir / "metrics";
    std::vector<std::string> missing;
    for (const auto* needed : {"entries.json", "summary.json"})
        if (!std::filesystem::exists(metrics_dir / needed))
            missing.push_back(std::string("metrics/") + needed);
    if (!std::filesystem::exists(out_dir / "zoo.json"))
        missing.push_back("zoo.json");
    if (!missing.empty()) {
        std::string what = "incomplete run directory, missing:";
        for (const auto& m : missing) what += " " + m;
        throw StageError("report", what);
    }

    const auto entries_doc = io::read_json(metrics_dir / "entries.json");
    const auto summary = io::read_json(metrics_dir / "summary.json");
    const auto report_dir = out_dir / "report";
    std::filesystem::create_directories(report_dir);

    // (a) per-group attack/defense summary
    auto get_or = [](const nlohmann::json& doc, const char* key, double fallback) {
        return doc.contains(key) ? doc.at(key).get<double>() : fallback;
    };
    std::string csv = "group,n,benign_accuracy,attack_success_rate,"
                      "reattack_success_rate,detection_acc,detection_ap\n";
    std::string md = "| group | n | BA | ASR | ReASR | det. ACC | det. AP |\n"
                     "|---|---|---|---|---|---|---|\n";
    for (const auto& group : {"benign", "baseline", "lsp", "sweep"}) {
        if (!summary.at("groups").contains(group)) continue;
        const auto& g = summary.at("groups").at(group);
        double acc = 0.0 / 0.0, ap = 0.0 / 0.0;
        if (std::string(group) == "baseline" && summary.contains("detection_baseline")) {
            acc = summary.at("detection_baseline").at("acc_calibrated").get<double>();
            ap = summary.at("detection_baseline").at("ap").get<double>();
        } else if (std::string(group) == "lsp" && summary.contains("detection_lsp")) {
            acc = summary.at("detection_lsp").at("acc_calibrated").get<double>();
            ap = summary.at("detection_lsp").at("ap").get<double>();
        }
        char line[256];
        auto fmt = [](double v) {
            if (std::isnan(v)) return std::string("-");
            char b[32];
            std::snprintf(b, sizeof(b), "%.4f", v);
            return std::string(b);
        };
        std::snprintf(line, sizeof(line), "%s,%d,%s,%s,%s,%s,%s\n", group,
                      g.at("n").get<int>(),
                      fmt(get_or(g, "mean_benign_accuracy", 0.0 / 0.0)).c_str(),
                      fmt(get_or(g, "mean_attack_success_rate", 0.0 / 0.0)).c_str(),
                      fmt(get_or(g, "mean_reattack_success_rate", 0.0 / 0.0)).c_str(),
                      fmt(acc).c_str(), fmt(ap).c_str());
        csv += line;
        std::snprintf(line, sizeof(line), "| %s | %d | %s | %s | %s | %s | %s |\n",
                      group, g.at("n").get<int>(),
                      fmt(get_or(g, "mean_benign_accuracy", 0.0 / 0.0)).c_str(),
                      fmt(get_or(g, "mean_attack_success_rate", 0.0 / 0.0)).c_str(),
                      fmt(get_or(g, "mean_reattack_success_rate", 0.0 / 0.0)).c_str(),
                      fmt(acc).c_str(), fmt(ap).c_str());
        md += line;
    }
    io::write_text(report_dir / "summary.csv", csv);
    io::write_text(report_dir / "summary.md", md);

    // (b) per-class averaged norm matrix, benign row on top, one row per
    // ground-truth target class for the baseline and lsp groups.
    std::size_t num_classes = 0;
    for (const auto& [id, row] : entries_doc.items())
        num_classes = std::max(num_classes,
                               row.at("per_class_norms").get<std::vector<double>>().size());

    auto mean_norms = [&](const std::string& group, int target) {
        std::vector<double> sums(num_classes, 0.0);
        int count = 0;
        for (const auto& [id, row] : entries_doc.items()) {
            if (row.at("group").get<std::string>() != group) continue;
            if (target >= 0 && row.at("target_class").get<int>() != target) continue;
            const auto norms = row.at("per_class_norms").get<std::vector<double>>();
            for (std::size_t i = 0; i < norms.size(); ++i) sums[i] += norms[i];
            ++count;
        }
        if (count)
            for (auto& s : sums) s /= count;
        return std::pair{sums, count};
    };

    std::string norm_csv = "group,target";
    for (std::size_t i = 0; i < num_classes; ++i)
        norm_csv += ",class" + std::to_string(i);
    norm_csv += "\n";
    auto emit_norm_row = [&](const std::string& group, const std::string& label,
                             const std::vector<double>& values) {
        norm_csv += group + "," + label;
        for (double v : values) {
            char b[32];
            std::snprintf(b, sizeof(b), ",%.4f", v);
            norm_csv += b;
        }
        norm_csv += "\n";
    };
    if (auto [values, n] = mean_norms("benign", -1); n > 0)
        emit_norm_row("benign", "Ben", values);
    for (const auto& group : {"baseline", "lsp"}) {
        std::set<int> targets;
        for (const auto& [id, row] : entries_doc.items())
            if (row.at("group").get<std::string>() == group)
                targets.insert(row.at("target_class").get<int>());
        for (int t : targets)
            if (auto [values, n] = mean_norms(group, t); n > 0)
                emit_norm_row(group, std::to_string(t), values);
    }
    io::write_text(report_dir / "norm_matrix.csv", norm_csv);

    // (c) attack-rate sweep
    std::map<double, std::vector<const nlohmann::json*>> by_rate;
    for (const auto& [id, row] : entries_doc.items()) {
        const auto& g = row.at("group").get<std::string>();
        if (g == "benign") continue;
        const double ar = row.at("attack_rate").is_string()
                              ? std::numeric_limits<double>::infinity()
                              : row.at("attack_rate").get<double>();
        by_rate[ar].push_back(&row);
    }
    std::string sweep_csv =
        "attack_rate,n,mean_reattack_success_rate,norm_q25,norm_q50,norm_q75\n";
    for (const auto& [ar, rows] : by_rate) {
        double reasr = 0.0;
        int n_reasr = 0;
        std::vector<double> norms;
        for (const auto* row : rows) {
            if (row->contains("reattack_success_rate")) {
                reasr += row->at("reattack_success_rate").get<double>();
                ++n_reasr;
            }
            if (row->contains("target_norm"))
                norms.push_back(row->at("target_norm").get<double>());
        }
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%zu,%.4f,%.4f,%.4f,%.4f\n",
                      format_rate(ar).c_str(), rows.size(),
                      n_reasr ? reasr / n_reasr : 0.0, quantile(norms, 0.25),
                      quantile(norms, 0.5), quantile(norms, 0.75));
        sweep_csv += line;
    }
    io::write_text(report_dir / "ar_sweep.csv", sweep_csv);
    return report_dir;
}

}  // namespace lsplab
