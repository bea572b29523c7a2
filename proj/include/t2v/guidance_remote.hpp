#pragma once

// HTTP adapter for an external latent-diffusion model server. Protocol:
//   GET  /info        -> {"latent_numel": N}
//   POST /encode      -> {"latent": [...]}            from {"image", "canvas"}
//   POST /encode_vjp  -> {"grad_image": [...]}        from {"image", "canvas", "grad_latent"}
//   POST /predict     -> {"eps": [...]}               from {"x_t", "t", "prompt", "uncond"}
//   POST /img2img     -> {"image": [...]}             from {"image", "size", "strength",
//                                                          "steps", "prompt", "seed"}
// The server owns the pre-trained weights; this process never loads them.

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

namespace t2v::guide {

inline RemoteDiffusionBackend::RemoteDiffusionBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (const char* cache = std::getenv("T2V_MODEL_CACHE")) cfg_.model_cache = cache;
    if (cfg_.endpoint.empty())
        throw BackendError("latent-diffusion backend needs backend.endpoint in the run config");
    nlohmann::json info = post("/info", {{"model_cache", cfg_.model_cache}});
    latent_numel_ = info.at("latent_numel").get<int64_t>();
    if (info.contains("latent_channels")) latent_channels_ = info["latent_channels"].get<int>();
}

inline nlohmann::json RemoteDiffusionBackend::post(const std::string& route,
                                                   const nlohmann::json& body) const {
    httplib::Client client(cfg_.endpoint);
    client.set_read_timeout(600, 0);
    auto res = client.Post(route, body.dump(), "application/json");
    if (!res || res->status != 200)
        throw BackendError("latent-diffusion backend unavailable at " + cfg_.endpoint + route);
    return nlohmann::json::parse(res->body);
}

inline Tensor RemoteDiffusionBackend::encode(const Tensor& image_hwc, int canvas) const {
    nlohmann::json body{{"image", image_hwc.data()}, {"canvas", canvas}};
    nlohmann::json out = post("/encode", body);
    std::vector<float> latent = out.at("latent").get<std::vector<float>>();
    auto shape = ad::Shape{static_cast<int64_t>(latent.size())};
    // differentiable through the server's VJP endpoint
    auto self = this;
    auto xn = image_hwc.node();
    std::vector<float> forward_image = image_hwc.data();
    return ad::make_op(shape, std::move(latent), {image_hwc},
                       [self, xn, canvas, forward_image](ad::Node& node) {
                           nlohmann::json body{{"image", forward_image},
                                               {"canvas", canvas},
                                               {"grad_latent", node.grad}};
                           nlohmann::json out = self->post("/encode_vjp", body);
                           std::vector<float> gi = out.at("grad_image").get<std::vector<float>>();
                           if (gi.size() != xn->grad.size())
                               throw BackendError("encode_vjp returned a mismatched gradient");
                           for (size_t i = 0; i < gi.size(); ++i) xn->grad[i] += gi[i];
                       });
}

inline std::vector<float> RemoteDiffusionBackend::predict(const std::vector<float>& x_t, int t,
                                                          const std::string& prompt) const {
    nlohmann::json out = post("/predict", {{"x_t", x_t}, {"t", t}, {"prompt", prompt}, {"uncond", false}});
    return out.at("eps").get<std::vector<float>>();
}

inline std::vector<float> RemoteDiffusionBackend::predict_uncond(const std::vector<float>& x_t,
                                                                 int t) const {
    nlohmann::json out = post("/predict", {{"x_t", x_t}, {"t", t}, {"prompt", ""}, {"uncond", true}});
    return out.at("eps").get<std::vector<float>>();
}

inline RasterImage RemoteDiffusionBackend::denoise_image(const RasterImage& img, float strength,
                                                         int steps, const std::string& prompt,
                                                         uint64_t seed) const {
    nlohmann::json out = post("/img2img", {{"image", img.rgb},
                                           {"size", img.width},
                                           {"strength", strength},
                                           {"steps", steps},
                                           {"prompt", prompt},
                                           {"seed", seed}});
    RasterImage result = RasterImage::white(img.width, img.height);
    std::vector<float> pixels = out.at("image").get<std::vector<float>>();
    if (pixels.size() != result.rgb.size()) throw BackendError("img2img returned a mismatched image");
    result.rgb = std::move(pixels);
    return result;
}

}  // namespace t2v::guide
