#pragma once

// PAE1 checkpoint container:
//   bytes 0..3   "PAE1"
//   bytes 4..11  header length L, unsigned 64-bit little-endian
//   next L bytes UTF-8 JSON header: kind, run-config echo, network layouts,
//                scalars, and a tensor manifest [{name, shape, offset}]
//   remainder    little-endian f64 payload, tensors in manifest order
// Offsets are byte offsets into the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pae/config.hpp"
#include "pae/error.hpp"
#include "pae/neuralnet.hpp"
#include "pae/paired.hpp"
#include "pae/variational.hpp"

namespace pae {

inline constexpr char kCheckpointMagic[4] = {'P', 'A', 'E', '1'};

struct Checkpoint {
    RunConfig config;
    std::optional<PairedModel> paired;               // paired, linear, identity, latent_map
    std::optional<VpaeModel> vpae;                   // vpae
    std::optional<VariationalLatentMap> latent_map;  // latent_map

    [[nodiscard]] ModelKind kind() const { return config.kind; }

    void validate() const {
        const bool want_paired = config.kind != ModelKind::vpae;
        if (want_paired != paired.has_value() || (config.kind == ModelKind::vpae) != vpae.has_value() ||
            (config.kind == ModelKind::latent_map) != latent_map.has_value()) {
            throw std::invalid_argument("checkpoint: models present do not match kind '" + to_string(config.kind) + "'");
        }
    }
};

namespace detail {

struct NamedNet {
    std::string name;
    const MlpNet* net;
};

inline std::vector<NamedNet> checkpoint_nets(const Checkpoint& ck) {
    std::vector<NamedNet> out;
    if (ck.paired) {
        const auto parts = ck.paired->parts();
        for (std::size_t i = 0; i < PairedModel::kParts; ++i) out.push_back({PairedModel::part_names()[i], parts[i]});
    }
    if (ck.vpae) {
        const auto parts = ck.vpae->parts();
        for (std::size_t i = 0; i < VpaeModel::kParts; ++i) out.push_back({VpaeModel::part_names()[i], parts[i]});
    }
    if (ck.latent_map) {
        out.push_back({"lm_enc", &ck.latent_map->encoder});
        out.push_back({"lm_dec", &ck.latent_map->decoder});
    }
    return out;
}

inline Json net_layout(const MlpNet& net) {
    Json layers = Json::array();
    for (const auto& s : net.layers()) {
        layers.push_back(Json{{"in", s.in_dim}, {"out", s.out_dim}, {"activation", to_string(s.activation)}, {"bias", s.bias}});
    }
    return Json{{"input_dim", net.input_dim()}, {"layers", layers}};
}

inline std::optional<double> json_opt_double(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline void put_le64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    ck.validate();
    Json header;
    header["format"] = "PAE1";
    header["kind"] = to_string(ck.kind());
    header["config"] = to_json(ck.config);
    Json scalars = Json::object();
    if (ck.vpae) {
        scalars["sigma_x"] = ck.vpae->vx.sigma;
        scalars["sigma_y"] = ck.vpae->vy.sigma;
    }
    if (ck.latent_map) {
        scalars["latent_map_sigma"] = ck.latent_map->sigma;
        scalars["latent_map_fixed_log_std"] =
            ck.latent_map->fixed_log_std ? Json(*ck.latent_map->fixed_log_std) : Json(nullptr);
    }
    header["scalars"] = scalars;

    Json nets = Json::object();
    Json manifest = Json::array();
    std::vector<double> payload;
    std::uint64_t offset = 0;
    auto add = [&](const std::string& name, std::vector<std::size_t> shape, const double* data, std::size_t n) {
        manifest.push_back(Json{{"name", name}, {"shape", shape}, {"offset", offset}});
        payload.insert(payload.end(), data, data + n);
        offset += 8 * n;
    };
    for (const auto& [name, net] : detail::checkpoint_nets(ck)) {
        nets[name] = detail::net_layout(*net);
        for (std::size_t l = 0; l < net->layers().size(); ++l) {
            const Matrix& w = net->weight(l);
            add(name + "." + std::to_string(l) + ".weight",
                {static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols())}, w.data(),
                static_cast<std::size_t>(w.size()));
            if (net->layers()[l].bias) {
                const Vector& b = net->bias(l);
                add(name + "." + std::to_string(l) + ".bias", {static_cast<std::size_t>(b.size())}, b.data(),
                    static_cast<std::size_t>(b.size()));
            }
        }
    }
    header["nets"] = nets;
    header["tensors"] = manifest;

    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    detail::put_le64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + 8 * payload.size());
    for (double v : payload) detail::put_le64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw ParseError("checkpoint too short", bytes.size());
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw ParseError("bad checkpoint magic", 0);
    const std::uint64_t hlen = detail::get_le64(bytes.data() + 4);
    if (hlen > bytes.size() - 12) throw ParseError("checkpoint header length exceeds file size", 4);
    const std::size_t payload_start = 12 + static_cast<std::size_t>(hlen);
    const std::size_t payload_len = bytes.size() - payload_start;

    Json header;
    try {
        header = Json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(), 12);
    }

    Checkpoint ck;
    try {
        if (header.at("format") != "PAE1") throw ParseError("checkpoint header format is not PAE1", 12);
        ck.config = parse_config(header.at("config"), false);
        if (header.at("kind").get<std::string>() != to_string(ck.config.kind)) {
            throw ParseError("checkpoint kind disagrees with config echo", 12);
        }

        // Manifest: names, ascending contiguous offsets, lengths summing to the payload.
        std::vector<std::pair<std::string, std::vector<std::size_t>>> entries;
        std::uint64_t expected = 0;
        for (const auto& t : header.at("tensors")) {
            auto shape = t.at("shape").get<std::vector<std::size_t>>();
            const auto off = t.at("offset").get<std::uint64_t>();
            if (off != expected) throw ParseError("tensor offsets must be ascending and contiguous", 12);
            std::uint64_t n = 1;
            for (auto d : shape) n *= d;
            expected += 8 * n;
            entries.emplace_back(t.at("name").get<std::string>(), std::move(shape));
        }
        if (expected != payload_len) throw ParseError("payload length does not match tensor manifest", payload_start);

        const auto& scalars = header.at("scalars");
        std::size_t entry = 0;
        std::size_t cursor = payload_start;
        auto read_net = [&](const std::string& name) {
            const auto& layout = header.at("nets").at(name);
            std::vector<LayerSpec> specs;
            for (const auto& l : layout.at("layers")) {
                specs.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                                 activation_from_string(l.at("activation").get<std::string>()), l.at("bias").get<bool>()});
            }
            MlpNet net;
            if (specs.empty()) {
                net = MlpNet::identity(layout.at("input_dim").get<std::size_t>());
            } else {
                Rng dummy(0);
                net = MlpNet(specs, dummy);
            }
            auto take = [&](const std::string& tname, std::vector<std::size_t> shape) {
                if (entry >= entries.size() || entries[entry].first != tname || entries[entry].second != shape) {
                    throw ParseError("tensor manifest does not match network layout at '" + tname + "'", 12);
                }
                ++entry;
                std::size_t n = 1;
                for (auto d : shape) n *= d;
                std::vector<double> vals(n);
                for (auto& v : vals) {
                    v = std::bit_cast<double>(detail::get_le64(bytes.data() + cursor));
                    cursor += 8;
                }
                return vals;
            };
            for (std::size_t l = 0; l < specs.size(); ++l) {
                const std::string base = name + "." + std::to_string(l);
                auto w = take(base + ".weight", {specs[l].out_dim, specs[l].in_dim});
                net.set_weight(l, Matrix(ConstMatrixMap(w.data(), static_cast<Eigen::Index>(specs[l].out_dim),
                                                        static_cast<Eigen::Index>(specs[l].in_dim))));
                if (specs[l].bias) {
                    auto b = take(base + ".bias", {specs[l].out_dim});
                    net.set_bias(l, Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
                }
            }
            return net;
        };

        if (ck.config.kind == ModelKind::vpae) {
            VpaeModel v;
            v.vx.encoder = read_net("enc_x");
            v.vx.decoder = read_net("dec_x");
            v.vy.encoder = read_net("enc_y");
            v.vy.decoder = read_net("dec_y");
            v.map = read_net("map");
            v.map_inv = read_net("map_inv");
            v.vx.sigma = scalars.at("sigma_x").get<double>();
            v.vy.sigma = scalars.at("sigma_y").get<double>();
            v.validate();
            ck.vpae = std::move(v);
        } else {
            PairedModel m;
            auto parts = m.parts();
            for (std::size_t i = 0; i < PairedModel::kParts; ++i) *parts[i] = read_net(PairedModel::part_names()[i]);
            m.validate();
            ck.paired = std::move(m);
        }
        if (ck.config.kind == ModelKind::latent_map) {
            VariationalLatentMap lm;
            lm.encoder = read_net("lm_enc");
            lm.decoder = read_net("lm_dec");
            lm.sigma = scalars.at("latent_map_sigma").get<double>();
            lm.fixed_log_std = detail::json_opt_double(scalars.at("latent_map_fixed_log_std"));
            lm.validate();
            ck.latent_map = std::move(lm);
        }
        if (entry != entries.size()) throw ParseError("tensor manifest lists unused tensors", 12);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed checkpoint header: ") + e.what(), 12);
    } catch (const ConfigError& e) {
        throw ParseError(std::string("checkpoint config echo is invalid: ") + e.what(), 12);
    } catch (const ParseError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("inconsistent checkpoint: ") + e.what(), 12);
    }
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path.string());
    return decode_checkpoint(bytes);
}

}  // namespace pae
