#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/net.hpp"
#include "mgd/schedule.hpp"

namespace mgd {

enum class CheckpointRole : std::uint8_t { EpsNet = 0, Classifier = 1 };

// FNV-1a over the beta bytes; a checkpoint refuses to load under a
// different schedule.
inline std::uint64_t schedule_fingerprint(const NoiseSchedule& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    std::uint64_t T = static_cast<std::uint64_t>(s.total_steps);
    mix_bytes(&T, sizeof(T));
    mix_bytes(s.betas.data(), s.betas.size() * sizeof(double));
    return h;
}

constexpr char kCheckpointMagic[5] = {'M', 'G', 'D', 'F', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const DenseNet& net,
                            CheckpointRole role, const NoiseSchedule& sched) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "save_checkpoint: unwritable path " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    auto put = [&](const void* data, std::size_t n) {
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    };
    put(&kCheckpointVersion, sizeof(kCheckpointVersion));
    std::uint8_t r = static_cast<std::uint8_t>(role);
    put(&r, sizeof(r));
    std::uint64_t fp = schedule_fingerprint(sched);
    put(&fp, sizeof(fp));
    std::uint32_t nlayers = static_cast<std::uint32_t>(net.widths.size());
    put(&nlayers, sizeof(nlayers));
    for (int w : net.widths) {
        std::uint32_t v = static_cast<std::uint32_t>(w);
        put(&v, sizeof(v));
    }
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        put(net.weights[l].data(), net.weights[l].size() * sizeof(double));
        put(net.biases[l].data(), net.biases[l].size() * sizeof(double));
    }
    check(out.good(), "save_checkpoint: write failed for " + path);
}

inline DenseNet load_checkpoint(const std::string& path, CheckpointRole expected_role,
                                const NoiseSchedule& sched) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "load_checkpoint: cannot open " + path);
    auto get = [&](void* data, std::size_t n) {
        in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        check(in.gcount() == static_cast<std::streamsize>(n),
              "load_checkpoint: truncated file " + path);
    };
    char magic[5];
    get(magic, sizeof(magic));
    check(std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
          "load_checkpoint: bad magic (version mismatch)");
    std::uint32_t version = 0;
    get(&version, sizeof(version));
    check(version == kCheckpointVersion, "load_checkpoint: version mismatch");
    std::uint8_t role = 0;
    get(&role, sizeof(role));
    check(role == static_cast<std::uint8_t>(expected_role), "load_checkpoint: role mismatch");
    std::uint64_t fp = 0;
    get(&fp, sizeof(fp));
    check(fp == schedule_fingerprint(sched), "load_checkpoint: schedule fingerprint mismatch");
    std::uint32_t nlayers = 0;
    get(&nlayers, sizeof(nlayers));
    check(nlayers >= 2 && nlayers < 1024, "load_checkpoint: corrupt layer count");
    DenseNet net;
    net.widths.resize(nlayers);
    for (auto& w : net.widths) {
        std::uint32_t v = 0;
        get(&v, sizeof(v));
        w = static_cast<int>(v);
    }
    for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
        std::vector<double> W(static_cast<std::size_t>(net.widths[l + 1]) * net.widths[l]);
        std::vector<double> b(net.widths[l + 1]);
        get(W.data(), W.size() * sizeof(double));
        get(b.data(), b.size() * sizeof(double));
        net.weights.push_back(std::move(W));
        net.biases.push_back(std::move(b));
    }
    return net;
}

}  // namespace mgd
