#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "gridmdp/mdp.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

/// Utility tables persist as plain text: a small header binding the table
/// to its scenario, then one line of utilities per epoch layer. Values are
/// written with round-trip precision so save/load is lossless.
inline void save_utility_table(const std::string& path, const UtilityTable& table, const DpOptions& opts,
                               const std::string& checksum) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write utility table: " + path);
    out << "gridmdp-utility-v1\n";
    out << "horizon " << table.horizon << "\n";
    out << "states " << table.num_states << "\n";
    out << "gamma " << format_double(opts.gamma) << "\n";
    out << "big_m " << format_double(opts.big_m) << "\n";
    out << "discounting " << (opts.discounting == DiscountMode::EpochPower ? "epoch-power" : "per-step") << "\n";
    out << "checksum " << checksum << "\n";
    for (int t = 0; t <= table.horizon; ++t) {
        for (long s = 0; s < table.num_states; ++s) {
            if (s) out << ' ';
            out << format_double(table.at(t, s));
        }
        out << '\n';
    }
}

struct LoadedUtility {
    UtilityTable table;
    double gamma = 1.0;
    double big_m = 1e9;
    DiscountMode discounting = DiscountMode::EpochPower;
    std::string checksum;
};

inline LoadedUtility load_utility_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open utility table: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "gridmdp-utility-v1") throw DataError(path + ": not a gridmdp utility table");

    LoadedUtility lu;
    std::string key;
    for (int i = 0; i < 6; ++i) {
        in >> key;
        if (key == "horizon") in >> lu.table.horizon;
        else if (key == "states") in >> lu.table.num_states;
        else if (key == "gamma") in >> lu.gamma;
        else if (key == "big_m") in >> lu.big_m;
        else if (key == "discounting") {
            std::string mode;
            in >> mode;
            lu.discounting = mode == "per-step" ? DiscountMode::PerStep : DiscountMode::EpochPower;
        } else if (key == "checksum") in >> lu.checksum;
        else throw DataError(path + ": unexpected header key '" + key + "'");
    }
    if (lu.table.horizon <= 0 || lu.table.num_states <= 0) throw DataError(path + ": bad dimensions");
    std::size_t n = static_cast<std::size_t>(lu.table.horizon + 1) * static_cast<std::size_t>(lu.table.num_states);
    lu.table.u.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!(in >> lu.table.u[i])) throw DataError(path + ": truncated utility data");
    return lu;
}

/// Verifies that a loaded table belongs to the scenario about to run.
inline void require_matching_table(const LoadedUtility& lu, const std::string& expected_checksum, int horizon,
                                   long num_states) {
    if (lu.checksum != expected_checksum)
        throw ChecksumError("utility table checksum " + lu.checksum + " does not match scenario " +
                            expected_checksum + " (grids, prices or profiles changed since the solve)");
    if (lu.table.horizon != horizon || lu.table.num_states != num_states)
        throw ChecksumError("utility table dimensions do not match the scenario");
}

}  // namespace gridmdp
