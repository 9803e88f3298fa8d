#include "lnc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lnc/digest.hpp"

namespace lnc {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob I/O assumes a little-endian host");

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

}  // namespace

const ModelCheckpoint::Entry* ModelCheckpoint::find(const std::string& name) const {
    for (const auto& e : tensors)
        if (e.name == name) return &e;
    return nullptr;
}

ModelCheckpoint checkpoint_from_model(const nn::Model& m, const TrainingMeta& meta) {
    ModelCheckpoint ckpt;
    ckpt.arch_id = m.arch_id;
    ckpt.in_c = m.in_c;
    ckpt.in_h = m.in_h;
    ckpt.in_w = m.in_w;
    ckpt.meta = meta;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (m.weights[i].empty()) continue;
        const auto& spec = m.layers[i];
        ModelCheckpoint::Entry w;
        w.name = nn::weight_name(m, i);
        const int64_t c_out = spec.channels_out;
        const int64_t fan = m.fan_in(i);
        if (spec.kind == nn::LayerKind::dense) {
            w.shape = {c_out, fan};
        } else {
            const int64_t k = spec.kind == nn::LayerKind::conv3x3 ? 3 : 1;
            w.shape = {c_out, fan / (k * k), k, k};
        }
        w.values = m.weights[i];
        ckpt.tensors.push_back(std::move(w));

        ModelCheckpoint::Entry b;
        b.name = nn::bias_name(m, i);
        b.shape = {c_out};
        b.values = m.biases[i];
        ckpt.tensors.push_back(std::move(b));
    }
    return ckpt;
}

void transfer_weights(const ModelCheckpoint& ckpt, nn::Model& m) {
    size_t used = 0;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (m.weights[i].empty()) continue;
        for (int part = 0; part < 2; ++part) {
            const std::string name =
                part == 0 ? nn::weight_name(m, i) : nn::bias_name(m, i);
            auto& dst = part == 0 ? m.weights[i] : m.biases[i];
            const auto* e = ckpt.find(name);
            if (!e)
                throw std::runtime_error("transfer_weights: checkpoint is missing tensor '" +
                                         name + "'");
            if (static_cast<size_t>(shape_numel(e->shape)) != dst.size() ||
                e->values.size() != dst.size())
                throw std::runtime_error("transfer_weights: shape mismatch for tensor '" +
                                         name + "'");
            dst = e->values;
            ++used;
        }
    }
    if (used != ckpt.tensors.size())
        throw std::runtime_error("transfer_weights: checkpoint has " +
                                 std::to_string(ckpt.tensors.size()) +
                                 " tensors but the model uses " + std::to_string(used));
}

nn::Model model_from_checkpoint(const ModelCheckpoint& ckpt) {
    nn::Model m = nn::build_arch(ckpt.arch_id, ckpt.in_h, ckpt.in_w);
    if (m.in_c != ckpt.in_c)
        throw std::runtime_error("checkpoint input channels disagree with arch '" +
                                 ckpt.arch_id + "'");
    transfer_weights(ckpt, m);
    return m;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    std::filesystem::path blob_path = path;
    blob_path += ".bin";

    std::string blob;
    nlohmann::ordered_json manifest;
    manifest["arch_id"] = ckpt.arch_id;
    manifest["input"] = {{"c", ckpt.in_c}, {"h", ckpt.in_h}, {"w", ckpt.in_w}};
    manifest["training_meta"] = {{"epochs", ckpt.meta.epochs},
                                 {"final_train_loss", ckpt.meta.final_train_loss},
                                 {"final_val_loss", ckpt.meta.final_val_loss},
                                 {"seed", ckpt.meta.seed}};
    manifest["data_file"] = blob_path.filename().string();
    auto tensors = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& e : ckpt.tensors) {
        if (static_cast<int64_t>(e.values.size()) != shape_numel(e.shape))
            throw std::runtime_error("save_checkpoint: value count mismatch for '" + e.name +
                                     "'");
        tensors.push_back(
            {{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
        size_t bytes = e.values.size() * sizeof(float);
        size_t pos = blob.size();
        blob.resize(pos + bytes);
        std::memcpy(blob.data() + pos, e.values.data(), bytes);
        offset += bytes;
    }
    manifest["tensors"] = std::move(tensors);
    manifest["blob_sha256"] = sha256_hex(blob);

    std::ofstream bf(blob_path, std::ios::binary);
    if (!bf) throw std::runtime_error("save_checkpoint: cannot write " + blob_path.string());
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw std::runtime_error("save_checkpoint: blob write failed");

    std::ofstream mf(path);
    if (!mf) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("save_checkpoint: manifest write failed");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream mf(path);
    if (!mf) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: bad manifest " + path.string() + ": " +
                                 e.what());
    }

    ModelCheckpoint ckpt;
    ckpt.arch_id = manifest.at("arch_id").get<std::string>();
    ckpt.in_c = manifest.at("input").at("c").get<int>();
    ckpt.in_h = manifest.at("input").at("h").get<int>();
    ckpt.in_w = manifest.at("input").at("w").get<int>();
    ckpt.meta.epochs = manifest.at("training_meta").at("epochs").get<int>();
    ckpt.meta.final_train_loss = manifest.at("training_meta").at("final_train_loss").get<double>();
    ckpt.meta.final_val_loss = manifest.at("training_meta").at("final_val_loss").get<double>();
    ckpt.meta.seed = manifest.at("training_meta").at("seed").get<uint64_t>();

    std::filesystem::path blob_path =
        path.parent_path() / manifest.at("data_file").get<std::string>();
    std::ifstream bf(blob_path, std::ios::binary | std::ios::ate);
    if (!bf) throw std::runtime_error("load_checkpoint: cannot open blob " + blob_path.string());
    std::string blob(static_cast<size_t>(bf.tellg()), '\0');
    bf.seekg(0);
    bf.read(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw std::runtime_error("load_checkpoint: blob read failed");

    const std::string expected = manifest.at("blob_sha256").get<std::string>();
    const std::string actual = sha256_hex(blob);
    if (expected != actual)
        throw std::runtime_error("load_checkpoint: blob digest mismatch for " +
                                 blob_path.string() + " (manifest " + expected + ", file " +
                                 actual + ")");

    for (const auto& t : manifest.at("tensors")) {
        ModelCheckpoint::Entry e;
        e.name = t.at("name").get<std::string>();
        e.shape = t.at("shape").get<std::vector<int64_t>>();
        const uint64_t offset = t.at("offset").get<uint64_t>();
        const int64_t n = shape_numel(e.shape);
        if (offset + n * sizeof(float) > blob.size())
            throw std::runtime_error("load_checkpoint: tensor '" + e.name +
                                     "' extends past blob end");
        e.values.resize(static_cast<size_t>(n));
        std::memcpy(e.values.data(), blob.data() + offset, n * sizeof(float));
        ckpt.tensors.push_back(std::move(e));
    }
    return ckpt;
}

}  // namespace lnc
