#pragma once

#include "ptycho/core.hpp"
#include "ptycho/io.hpp"

#include <set>
#include <string>
#include <vector>

namespace ptycho::cli {

// Flat key=value run configuration. Typed getters record the resolved value
// (defaults included); unknown keys are rejected after the command has read
// everything it understands.
class Config {
public:
    Config() = default;
    explicit Config(io::KeyValues kv) : kv_(std::move(kv)) {}

    static Config from_file(const std::string& path);
    void override_kv(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string str(const std::string& key, const std::string& def);
    std::string str_required(const std::string& key);
    double num(const std::string& key, double def);
    double num_required(const std::string& key);
    long integer(const std::string& key, long def);
    bool flag(const std::string& key, bool def);
    std::vector<long> int_list(const std::string& key); // empty if absent
    std::vector<double> num_list(const std::string& key);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void reject_unknown() const;
    const io::KeyValues& resolved() const { return resolved_; }
    void write_resolved(const std::string& path) const { io::write_kv(path, resolved_); }

private:
    io::KeyValues kv_;
    io::KeyValues resolved_;
    std::set<std::string> touched_;
};

/// Fails unless the directory is absent/empty or force is set.
void prepare_out_dir(const std::string& out, bool force);

void cmd_simulate(Config& cfg, const std::string& out, bool force);
void cmd_train_ae(Config& cfg, const std::string& out, bool force);
void cmd_reconstruct(Config& cfg, const std::string& out, bool force);
void cmd_sweep(Config& cfg, const std::string& out, bool force);
void cmd_landscape(Config& cfg, const std::string& out, bool force);
void cmd_make_dataset(Config& cfg, const std::string& out, bool force);

// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 divergence.
int run_command(const std::string& command, const std::vector<std::string>& config_files,
                const std::vector<std::string>& overrides, const std::string& out, bool force);

} // namespace ptycho::cli
