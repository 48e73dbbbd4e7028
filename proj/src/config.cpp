#include "ctrlvdiff/config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace ctrlvdiff {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ValidationError("config: " + key + " = '" + text + "' is not a valid number");
    return v;
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    const DenoiserConfig m;
    const TrainConfig t;
    const RenderConfig r;
    c.values_ = {
        {"model.dim", std::to_string(m.dim)},
        {"model.layers", std::to_string(m.layers)},
        {"model.heads", std::to_string(m.heads)},
        {"model.patch", std::to_string(m.patch)},
        {"model.max_frames", std::to_string(m.max_frames)},
        {"model.caption_buckets", std::to_string(m.caption_buckets)},
        {"model.mlp_ratio", std::to_string(m.mlp_ratio)},
        {"schedule.kind", "linear"},
        {"schedule.num_steps", std::to_string(t.schedule_steps)},
        {"stages.steps_I", std::to_string(t.stage_steps[0])},
        {"stages.steps_II", std::to_string(t.stage_steps[1])},
        {"stages.steps_III", std::to_string(t.stage_steps[2])},
        {"stages.batch_size", std::to_string(t.batch_size)},
        {"stages.lr", "2e-5"},
        {"stages.weight_decay", "0.01"},
        {"stages.warmup_steps", std::to_string(t.optimizer.warmup_steps)},
        {"stages.clip_norm", "1.0"},
        {"stages.p_text", "0.1"},
        {"stages.checkpoint_every", std::to_string(t.checkpoint_every)},
        {"augment.max_angle_deg", "35"},
        {"augment.max_seg_residual", "0.05"},
        {"augment.min_psnr_db", "18"},
        {"augment.sampling_steps", std::to_string(t.augment_sampling_steps)},
        {"data.frames", "8"},
        {"data.height", std::to_string(r.height)},
        {"data.width", std::to_string(r.width)},
        {"data.fov_degrees", "50"},
        {"data.train_fraction", "0.8"},
        {"data.val_fraction", "0.1"},
        {"data.test_fraction", "0.1"},
        {"seeds.seed", "0"},
        {"seeds.model_seed", "0"},
        {"seeds.codec_seed", std::to_string(kDefaultCodecSeed)},
    };
    if (const char* env = std::getenv(kSeedEnv); env && *env) {
        parse_number<std::uint64_t>(kSeedEnv, env);
        c.values_["seeds.seed"] = env;
    }
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!has(key)) throw ValidationError("config: unknown key '" + key + "'");
    values_[key] = value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError("config: cannot parse " + path.string() + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ValidationError("config: key '" + section + "' must live inside a [section]");
        for (const auto& [key, value] : body) set(section + "." + key, trim(value.data()));
    }
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("config override '" + assignment + "' must look like section.key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config: unknown key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

double RunConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return parse_number<double>(key, s);
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ValidationError("config: " + key + " = '" + s + "' is not a boolean");
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) os << '\n';
            os << '[' << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = " << value << '\n';
    }
    return os.str();
}

RenderConfig render_config_from(const RunConfig& cfg) {
    RenderConfig r;
    r.height = cfg.get_int("data.height");
    r.width = cfg.get_int("data.width");
    r.fov_degrees = cfg.get_double("data.fov_degrees");
    require(r.height > 0 && r.width > 0, "config: data.height and data.width must be positive");
    require(r.fov_degrees > 0 && r.fov_degrees < 180, "config: data.fov_degrees must lie in (0,180)");
    return r;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    DenoiserConfig& m = t.model;
    m.dim = cfg.get_int("model.dim");
    m.layers = cfg.get_int("model.layers");
    m.heads = cfg.get_int("model.heads");
    m.patch = cfg.get_int("model.patch");
    m.max_frames = cfg.get_int("model.max_frames");
    m.caption_buckets = cfg.get_int("model.caption_buckets");
    m.mlp_ratio = cfg.get_int("model.mlp_ratio");
    m.seed = cfg.get_u64("seeds.model_seed");
    const RenderConfig r = render_config_from(cfg);
    require(m.patch > 0 && r.height % m.patch == 0 && r.width % m.patch == 0,
            "config: data.height and data.width must be multiples of model.patch");
    m.grid_rows = r.height / m.patch;
    m.grid_cols = r.width / m.patch;

    t.codec_seed = cfg.get_u64("seeds.codec_seed");
    t.schedule_kind = parse_schedule_kind(cfg.get("schedule.kind"));
    t.schedule_steps = cfg.get_int("schedule.num_steps");
    t.stage_steps = {cfg.get_int("stages.steps_I"), cfg.get_int("stages.steps_II"), cfg.get_int("stages.steps_III")};
    t.batch_size = cfg.get_int("stages.batch_size");
    t.optimizer.lr = cfg.get_double("stages.lr");
    t.optimizer.weight_decay = cfg.get_double("stages.weight_decay");
    t.optimizer.warmup_steps = cfg.get_int("stages.warmup_steps");
    t.optimizer.clip_norm = cfg.get_double("stages.clip_norm");
    t.p_text = cfg.get_double("stages.p_text");
    t.checkpoint_every = cfg.get_int("stages.checkpoint_every");
    t.seed = cfg.get_u64("seeds.seed");
    t.thresholds.max_angle_deg = cfg.get_double("augment.max_angle_deg");
    t.thresholds.max_seg_residual = cfg.get_double("augment.max_seg_residual");
    t.thresholds.min_psnr_db = cfg.get_double("augment.min_psnr_db");
    t.augment_sampling_steps = cfg.get_int("augment.sampling_steps");
    t.validate();
    return t;
}

}  // namespace ctrlvdiff
