#include "invrec/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "invrec/errors.hpp"
#include "invrec/metrics.hpp"

namespace invrec::io {

namespace {

using pipeline::Settings;

// Thrown by the value parsers; turned into ConfigError with context.
struct BadValue {
  std::string why;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw BadValue{"expected a number, got '" + s + "'"};
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw BadValue{"expected an integer, got '" + s + "'"};
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw BadValue{"expected a non-negative integer, got '" + s + "'"};
  return v;
}

struct Entry {
  std::string key;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

template <class M>
Entry real(std::string key, M member) {
  return {std::move(key), [member](Settings& s, const std::string& v) { member(s) = parse_double(v); },
          [member](const Settings& s) { return format_number(member(const_cast<Settings&>(s))); }};
}

template <class M>
Entry integer(std::string key, M member) {
  return {std::move(key),
          [member](Settings& s, const std::string& v) {
            using T = std::remove_reference_t<decltype(member(s))>;
            member(s) = static_cast<T>(parse_int(v));
          },
          [member](const Settings& s) { return std::to_string(member(const_cast<Settings&>(s))); }};
}

template <class M>
Entry unsigned64(std::string key, M member) {
  return {std::move(key), [member](Settings& s, const std::string& v) { member(s) = parse_u64(v); },
          [member](const Settings& s) { return std::to_string(member(const_cast<Settings&>(s))); }};
}

template <class M>
Entry text(std::string key, M member) {
  return {std::move(key), [member](Settings& s, const std::string& v) { member(s) = v; },
          [member](const Settings& s) { return member(const_cast<Settings&>(s)); }};
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(unsigned64("env.seed", [](Settings& s) -> auto& { return s.env.seed; }));
    e.push_back(integer("env.max_steps", [](Settings& s) -> auto& { return s.env.max_steps; }));
    e.push_back(real("env.kappa", [](Settings& s) -> auto& { return s.env.kappa; }));
    e.push_back(real("env.click_bias", [](Settings& s) -> auto& { return s.env.click_bias; }));
    e.push_back(real("env.drift", [](Settings& s) -> auto& { return s.env.drift; }));
    e.push_back(real("env.leave_prob", [](Settings& s) -> auto& { return s.env.leave_prob; }));
    e.push_back(real("env.taste_share", [](Settings& s) -> auto& { return s.env.taste_share; }));

    e.push_back(real("ppo.gamma", [](Settings& s) -> auto& { return s.ppo.gamma; }));
    e.push_back(real("ppo.gae_lambda", [](Settings& s) -> auto& { return s.ppo.gae_lambda; }));
    e.push_back(real("ppo.clip_eps", [](Settings& s) -> auto& { return s.ppo.clip_eps; }));
    e.push_back(integer("ppo.epochs", [](Settings& s) -> auto& { return s.ppo.epochs; }));
    e.push_back(integer("ppo.minibatch_size", [](Settings& s) -> auto& { return s.ppo.minibatch_size; }));
    e.push_back(real("ppo.lr", [](Settings& s) -> auto& { return s.ppo.lr; }));
    e.push_back(real("ppo.entropy_coef", [](Settings& s) -> auto& { return s.ppo.entropy_coef; }));
    e.push_back(real("ppo.value_coef", [](Settings& s) -> auto& { return s.ppo.value_coef; }));
    e.push_back(real("ppo.bonus_weight", [](Settings& s) -> auto& { return s.ppo.bonus_weight; }));
    e.push_back({"ppo.variant",
                 [](Settings& s, const std::string& v) {
                   try {
                     s.ppo.variant = optim::variant_from_string(v);
                   } catch (const ConfigError& err) {
                     throw BadValue{err.what()};
                   }
                 },
                 [](const Settings& s) { return optim::to_string(s.ppo.variant); }});
    e.push_back(real("ppo.beta", [](Settings& s) -> auto& { return s.ppo.beta_init; }));
    e.push_back(real("ppo.kl_a", [](Settings& s) -> auto& { return s.ppo.kl_a; }));
    e.push_back(real("ppo.kl_b", [](Settings& s) -> auto& { return s.ppo.kl_b; }));
    e.push_back(real("ppo.kl_target", [](Settings& s) -> auto& { return s.ppo.kl_target; }));

    e.push_back(real("ddpg.gamma", [](Settings& s) -> auto& { return s.ddpg.gamma; }));
    e.push_back(real("ddpg.tau", [](Settings& s) -> auto& { return s.ddpg.tau; }));
    e.push_back(integer("ddpg.hidden", [](Settings& s) -> auto& { return s.ddpg.hidden; }));
    e.push_back(integer("ddpg.buffer_size", [](Settings& s) -> auto& { return s.ddpg.buffer_size; }));
    e.push_back(integer("ddpg.episodes", [](Settings& s) -> auto& { return s.ddpg.episodes; }));
    e.push_back(real("ddpg.lr_actor", [](Settings& s) -> auto& { return s.ddpg.lr_actor; }));
    e.push_back(real("ddpg.lr_critic", [](Settings& s) -> auto& { return s.ddpg.lr_critic; }));
    e.push_back(integer("ddpg.batch_size", [](Settings& s) -> auto& { return s.ddpg.batch_size; }));
    e.push_back(real("ddpg.ou_theta", [](Settings& s) -> auto& { return s.ddpg.ou_theta; }));
    e.push_back(real("ddpg.ou_mu", [](Settings& s) -> auto& { return s.ddpg.ou_mu; }));
    e.push_back(real("ddpg.ou_sigma", [](Settings& s) -> auto& { return s.ddpg.ou_sigma; }));
    e.push_back(real("ddpg.ou_scale", [](Settings& s) -> auto& { return s.ddpg.ou_scale; }));
    e.push_back(integer("ddpg.plateau_window", [](Settings& s) -> auto& { return s.ddpg.plateau_window; }));
    e.push_back(real("ddpg.plateau_tol", [](Settings& s) -> auto& { return s.ddpg.plateau_tol; }));
    e.push_back(integer("ddpg.min_episodes", [](Settings& s) -> auto& { return s.ddpg.min_episodes; }));
    e.push_back(integer("ddpg.eval_every", [](Settings& s) -> auto& { return s.ddpg.eval_every; }));
    e.push_back(integer("ddpg.eval_episodes", [](Settings& s) -> auto& { return s.ddpg.eval_episodes; }));
    e.push_back(real("ddpg.final_init", [](Settings& s) -> auto& { return s.ddpg.final_init; }));
    e.push_back(real("ddpg.preact_penalty", [](Settings& s) -> auto& { return s.ddpg.preact_penalty; }));
    e.push_back(real("ddpg.critic_weight_decay",
                     [](Settings& s) -> auto& { return s.ddpg.critic_weight_decay; }));

    e.push_back(integer("run.iterations", [](Settings& s) -> auto& { return s.run.iterations; }));
    e.push_back(integer("run.episodes_per_iteration",
                        [](Settings& s) -> auto& { return s.run.episodes_per_iteration; }));
    e.push_back(real("run.disc_lr", [](Settings& s) -> auto& { return s.run.disc_lr; }));
    e.push_back(integer("run.disc_updates_per_iteration",
                        [](Settings& s) -> auto& { return s.run.disc_updates_per_iteration; }));
    e.push_back(integer("run.eval_episodes", [](Settings& s) -> auto& { return s.run.eval_episodes; }));
    e.push_back(integer("run.checkpoint_every", [](Settings& s) -> auto& { return s.run.checkpoint_every; }));
    e.push_back(integer("run.hidden", [](Settings& s) -> auto& { return s.run.hidden; }));
    e.push_back(integer("run.disc_hidden", [](Settings& s) -> auto& { return s.run.disc_hidden; }));
    e.push_back({"run.critic_input",
                 [](Settings& s, const std::string& v) {
                   if (v == "state")
                     s.run.critic_input = policy::CriticInput::State;
                   else if (v == "state_action")
                     s.run.critic_input = policy::CriticInput::StateAction;
                   else
                     throw BadValue{"expected state or state_action, got '" + v + "'"};
                 },
                 [](const Settings& s) {
                   return std::string(s.run.critic_input == policy::CriticInput::State ? "state"
                                                                                       : "state_action");
                 }});
    e.push_back(text("run.expert_path", [](Settings& s) -> auto& { return s.run.expert_path; }));
    e.push_back(integer("run.expert_pairs", [](Settings& s) -> auto& { return s.run.expert_pairs; }));
    e.push_back(unsigned64("run.seed", [](Settings& s) -> auto& { return s.run.seed; }));
    e.push_back(text("run.out_dir", [](Settings& s) -> auto& { return s.run.out_dir; }));
    e.push_back(integer("run.js_bins", [](Settings& s) -> auto& { return s.run.js_bins; }));
    e.push_back(unsigned64("run.js_projection_seed", [](Settings& s) -> auto& { return s.run.js_projection_seed; }));
    return e;
  }();
  return entries;
}

const Entry* lookup(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return &e;
  return nullptr;
}

}  // namespace

pipeline::Settings default_settings() { return {}; }

void set_config_value(pipeline::Settings& settings, const std::string& key, const std::string& value) {
  const auto* e = lookup(key);
  if (e == nullptr) throw ConfigError("unknown config key '" + key + "'");
  try {
    e->set(settings, value);
  } catch (const BadValue& bad) {
    throw ConfigError("invalid value for '" + key + "': " + bad.why);
  }
}

pipeline::Settings parse_config_text(const std::string& text, const std::string& source) {
  auto settings = default_settings();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto* e = lookup(key);
    if (e == nullptr) throw ConfigError(where + ": unknown config key '" + key + "'");
    try {
      e->set(settings, value);
    } catch (const BadValue& bad) {
      throw ConfigError(where + ": invalid value for '" + key + "': " + bad.why);
    }
  }
  settings.validate();
  return settings;
}

pipeline::Settings parse_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

std::string render_config(const pipeline::Settings& settings) {
  std::string out;
  for (const auto& e : registry()) out += e.key + " = " + e.get(settings) + "\n";
  return out;
}

}  // namespace invrec::io
