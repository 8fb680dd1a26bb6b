#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmict/corpus.hpp"
#include "mmict/rng.hpp"
#include "mmict/tensor.hpp"

namespace mmict {

// Token-embedding sequence. Row 0 of embeddings is the sequence-summary
// slot; rows 1..T align with tokens.
struct TextEncoding {
    std::vector<std::string> tokens;
    Tensor embeddings;  // (1 + tokens) x d
};

struct ImageEncoding {
    Tensor vector;  // 1 x c
    ImageRef source;
};

// Deterministic stand-in for pretrained text/image backbones: entities
// live in a shared latent space mapped into the text and image spaces by
// fixed full-rank linear maps.
struct SyntheticWorld {
    int entity_count = 64;
    int latent_dim = 16;
    int text_dim = 32;   // d
    int image_dim = 48;  // c
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;

    Tensor latents;    // entity_count x latent_dim
    Tensor text_map;   // latent_dim x text_dim
    Tensor image_map;  // latent_dim x image_dim

    static SyntheticWorld make(int entities = 64, int latent = 16, int d = 32, int c = 48,
                               double sigma = 0.05, std::uint64_t seed = 1) {
        SyntheticWorld w;
        w.entity_count = entities;
        w.latent_dim = latent;
        w.text_dim = d;
        w.image_dim = c;
        w.noise_sigma = sigma;
        w.seed = seed;
        w.latents = Tensor::randn(entities, latent, mix_seed(seed, "latents"));
        double s = 1.0 / std::sqrt(double(latent));
        w.text_map = Tensor::randn(latent, d, mix_seed(seed, "text_map"), s);
        w.image_map = Tensor::randn(latent, c, mix_seed(seed, "image_map"), s);
        return w;
    }

    std::string entity_name(int k) const { return "ent" + std::to_string(k); }

    std::optional<int> entity_of_token(const std::string& tok) const {
        if (tok.size() < 4 || tok.compare(0, 3, "ent") != 0) return std::nullopt;
        for (size_t i = 3; i < tok.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return std::nullopt;
        int k = std::stoi(tok.substr(3));
        if (k < 0 || k >= entity_count) return std::nullopt;
        return k;
    }

    Tensor entity_text_vector(int k) const {
        Tensor lat(1, latent_dim);
        for (int j = 0; j < latent_dim; ++j) lat.at(0, j) = latents.at(k, j);
        return matmul_values(lat, text_map);
    }

    Tensor entity_image_vector(int k) const {
        Tensor lat(1, latent_dim);
        for (int j = 0; j < latent_dim; ++j) lat.at(0, j) = latents.at(k, j);
        return matmul_values(lat, image_map);
    }
};

inline std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Entity tokens embed as text_map * latent + noise; everything else gets a
// seeded-hash Gaussian vector. Summary slot = mean of token vectors.
inline TextEncoding encode_text_synthetic(const std::string& text, const SyntheticWorld& world) {
    TextEncoding enc;
    enc.tokens = tokenize_lower(text);
    int t = static_cast<int>(enc.tokens.size());
    enc.embeddings = Tensor(1 + t, world.text_dim);
    for (int i = 0; i < t; ++i) {
        Tensor row;
        if (auto ent = world.entity_of_token(enc.tokens[i])) {
            row = world.entity_text_vector(*ent);
            Tensor noise = Tensor::randn(1, world.text_dim,
                                         mix_seed(world.seed, "tnoise:" + enc.tokens[i]),
                                         world.noise_sigma);
            row.add_scaled(noise, 1.0);
        } else {
            row = Tensor::randn(1, world.text_dim, mix_seed(world.seed, "tok:" + enc.tokens[i]));
        }
        for (int j = 0; j < world.text_dim; ++j) {
            enc.embeddings.at(1 + i, j) = row.at(0, j);
            enc.embeddings.at(0, j) += row.at(0, j) / t;
        }
    }
    return enc;
}

// Image fixtures are labeled by entity in the URI: synth://<entity>/...
inline ImageEncoding encode_image_synthetic(const ImageRef& image, const SyntheticWorld& world) {
    std::string label;
    size_t p = image.uri.find("//");
    if (p != std::string::npos) {
        size_t start = p + 2;
        size_t end = image.uri.find('/', start);
        label = image.uri.substr(start, end == std::string::npos ? std::string::npos : end - start);
    }
    auto ent = world.entity_of_token(label);
    if (!ent) throw std::runtime_error("unlabeled fixture image '" + image.uri + "'");
    ImageEncoding enc;
    enc.vector = world.entity_image_vector(*ent);
    if (world.noise_sigma > 0.0) {
        Tensor noise = Tensor::randn(1, world.image_dim, mix_seed(world.seed, "inoise:" + image.uri),
                                     world.noise_sigma);
        enc.vector.add_scaled(noise, 1.0);
    }
    enc.source = image;
    return enc;
}

// ---------------------------------------------------------------------------
// Precomputed embeddings (offline passage/question vectors)

struct EmbeddingTable {
    int dim = 0;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> vectors;

    void add(const std::string& id, std::vector<double> v) {
        if (ids.empty()) dim = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != dim)
            throw std::runtime_error("embedding dimension mismatch at id '" + id + "': expected " +
                                     std::to_string(dim) + ", got " + std::to_string(v.size()));
        ids.push_back(id);
        vectors.push_back(std::move(v));
    }

    size_t size() const { return ids.size(); }
};

inline void save_precomputed(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embeddings to '" + path + "'");
    for (size_t i = 0; i < table.ids.size(); ++i) {
        nlohmann::json j{{"id", table.ids[i]}, {"vector", table.vectors[i]}};
        out << j.dump() << "\n";
    }
}

inline EmbeddingTable load_precomputed(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read embeddings from '" + path + "'");
    EmbeddingTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_copy(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        table.add(j.at("id").get<std::string>(), j.at("vector").get<std::vector<double>>());
    }
    return table;
}

}  // namespace mmict
