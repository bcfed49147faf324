#pragma once

// Cross-cutting plumbing: content hashing, deterministic parallel map, and
// the run manifests written next to every artifact.

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/error.hpp"

namespace halknob {

inline constexpr const char* kToolVersion = "1.0.0";

inline uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return data;
}

inline std::string file_hash(const std::string& path) {
    return hex64(fnv1a64(read_file(path)));
}

// results[i] = f(inputs[i]); output order is input order and independent of
// the worker count. The first exception from any worker is rethrown.
template <class In, class F>
auto parallel_map(const std::vector<In>& inputs, F&& f, unsigned workers = 0)
    -> std::vector<decltype(f(inputs[0]))> {
    using Out = decltype(f(inputs[0]));
    if (workers == 0) {
        workers = std::thread::hardware_concurrency();
        if (workers == 0) workers = 1;
    }
    std::vector<Out> results(inputs.size());
    if (inputs.empty()) return results;
    if (workers == 1 || inputs.size() == 1) {
        for (size_t i = 0; i < inputs.size(); ++i) results[i] = f(inputs[i]);
        return results;
    }
    workers = std::min<unsigned>(workers,
                                 static_cast<unsigned>(inputs.size()));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = w; i < inputs.size(); i += workers)
                    results[i] = f(inputs[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

// Manifest recording what produced an artifact. No timestamps: reruns from
// identical inputs must be byte-identical.
inline nlohmann::json make_manifest(const std::string& command,
                                    const nlohmann::json& parameters,
                                    const std::vector<std::string>& inputs,
                                    const std::vector<std::string>& outputs) {
    nlohmann::json m;
    m["command"] = command;
    m["parameters"] = parameters;
    m["tool_version"] = kToolVersion;
    nlohmann::json in_hashes;
    for (const auto& p : inputs) in_hashes[p] = file_hash(p);
    m["inputs"] = std::move(in_hashes);
    nlohmann::json out_hashes;
    for (const auto& p : outputs) out_hashes[p] = file_hash(p);
    m["outputs"] = std::move(out_hashes);
    return m;
}

inline void write_manifest(const std::string& artifact_path,
                           const nlohmann::json& manifest) {
    std::string path = artifact_path + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write manifest: " + path);
    out << manifest.dump(2) << "\n";
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace halknob
