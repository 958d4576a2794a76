#pragma once

// Checkpoint directory: face.ply, mouth.ply (when the mouth branch has
// points) and model.pgsw holding the mouth background and, per branch with
// a deformation model, its shape metadata, encoder box and parameters.

#include <filesystem>
#include <string>

#include "pgst/io/ply.hpp"
#include "pgst/io/weights.hpp"
#include "pgst/train.hpp"

namespace pgst::io {

namespace detail {

inline Tensor deform_meta(const DeformModel &m) {
    const auto &c = m.config();
    std::vector<double> v{static_cast<double>(m.branch() == Branch::face ? 0 : 1),
                          static_cast<double>(m.audio_dim()),
                          static_cast<double>(m.expression_dim()),
                          static_cast<double>(c.encoder.levels),
                          static_cast<double>(c.encoder.features),
                          static_cast<double>(c.encoder.table_size),
                          static_cast<double>(c.encoder.base_resolution),
                          static_cast<double>(c.encoder.max_resolution),
                          static_cast<double>(c.proj_spatial),
                          static_cast<double>(c.proj_audio),
                          static_cast<double>(c.proj_expression)};
    for (int h : c.hidden) v.push_back(h);
    Tensor t({static_cast<std::uint32_t>(v.size())});
    t.data = v;
    return t;
}

inline void append_deform(NamedTensors &out, const std::string &prefix, DeformModel m) {
    out.emplace_back(prefix + "meta", deform_meta(m));
    m.visit_buffers(prefix, [&](const std::string &n, Tensor &t) { out.emplace_back(n, t); });
    m.visit(prefix, [&](const std::string &n, Tensor &t) { out.emplace_back(n, t); });
}

inline const Tensor *find(const NamedTensors &t, const std::string &name) {
    for (const auto &[n, v] : t)
        if (n == name) return &v;
    return nullptr;
}

inline DeformModel restore_deform(const NamedTensors &t, const std::string &prefix,
                                  const std::string &path) {
    const Tensor *meta = find(t, prefix + "meta");
    if (!meta || meta->data.size() < 11) throw InputError(path + ": malformed '" + prefix + "meta'");
    const auto &v = meta->data;
    auto as_int = [&](std::size_t k) { return static_cast<int>(v[k]); };
    DeformConfig cfg;
    cfg.encoder.levels = as_int(3);
    cfg.encoder.features = as_int(4);
    cfg.encoder.table_size = as_int(5);
    cfg.encoder.base_resolution = as_int(6);
    cfg.encoder.max_resolution = as_int(7);
    cfg.proj_spatial = as_int(8);
    cfg.proj_audio = as_int(9);
    cfg.proj_expression = as_int(10);
    cfg.hidden.clear();
    for (std::size_t k = 11; k < v.size(); ++k) cfg.hidden.push_back(as_int(k));
    const Tensor *box = find(t, prefix + "encoder.box");
    if (!box || box->data.size() != 6) throw InputError(path + ": malformed '" + prefix + "encoder.box'");
    try {
        DeformModel m(as_int(0) == 0 ? Branch::face : Branch::mouth, cfg, as_int(1), as_int(2),
                      Vec3(box->data[0], box->data[1], box->data[2]),
                      Vec3(box->data[3], box->data[4], box->data[5]), 0);
        load_tensors(m, prefix, t, path);
        return m;
    } catch (const InputError &e) {
        throw InputError(path + ": " + e.what());
    }
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path &dir, const HeadModel &head) {
    std::filesystem::create_directories(dir);
    write_ply(dir / "face.ply", head.face.cloud);
    if (head.mouth.cloud.size() > 0) write_ply(dir / "mouth.ply", head.mouth.cloud);
    NamedTensors t;
    Tensor bg({3});
    for (int k = 0; k < 3; ++k) bg.data[k] = head.mouth_background[k];
    t.emplace_back("head.mouth_background", bg);
    if (head.face.deform) detail::append_deform(t, "face.", *head.face.deform);
    if (head.mouth.deform) detail::append_deform(t, "mouth.", *head.mouth.deform);
    write_weights(dir / "model.pgsw", t);
}

inline HeadModel load_checkpoint(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir))
        throw InputError(dir.string() + ": checkpoint directory not found");
    HeadModel head;
    head.face.cloud = read_ply(dir / "face.ply");
    if (std::filesystem::exists(dir / "mouth.ply")) head.mouth.cloud = read_ply(dir / "mouth.ply");
    const auto path = (dir / "model.pgsw").string();
    const auto t = read_weights(dir / "model.pgsw");
    if (const Tensor *bg = detail::find(t, "head.mouth_background"); bg && bg->data.size() == 3)
        head.mouth_background = Vec3(bg->data[0], bg->data[1], bg->data[2]);
    if (detail::find(t, "face.meta")) head.face.deform = detail::restore_deform(t, "face.", path);
    if (detail::find(t, "mouth.meta")) head.mouth.deform = detail::restore_deform(t, "mouth.", path);
    return head;
}

} // namespace pgst::io
