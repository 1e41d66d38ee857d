"""Regenerates the guidance wire-protocol fixtures.

Tensors are float16, little-endian, base64. Every value used here is exactly
representable in float16 or is quantized by numpy, which rounds to nearest
even like the client does.
"""
import base64
import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent


def tensor(a):
    a = np.asarray(a, dtype=np.float32)
    half = a.astype("<f2")
    return {"shape": list(a.shape), "dtype": "float16", "data": base64.b64encode(half.tobytes()).decode()}


def decoded(a):
    return np.asarray(a, dtype=np.float32).astype("<f2").astype(np.float64).ravel().tolist()


def pattern(n, mul, mod, scale, offset=0.0):
    i = np.arange(n, dtype=np.int64)
    return ((i * mul) % mod) / scale + offset


def write(name, obj):
    (OUT / name).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


image = pattern(8 * 8 * 3, 37, 101, 100.0).reshape(8, 8, 3)
latent = pattern(4 * 2 * 2, 13, 17, 8.0, -1.0).reshape(4, 2, 2)
noised = pattern(4 * 2 * 2, 5, 11, 4.0, -1.25).reshape(4, 2, 2)
depth = np.array([[[-1.0, -0.5], [0.25, 1.0]]])
eps_cond = pattern(16, 7, 19, 16.0, -0.5).reshape(4, 2, 2)
eps_uncond = pattern(16, 3, 23, 32.0, -0.25).reshape(4, 2, 2)
latent_grad = pattern(16, 11, 13, 64.0, -0.1).reshape(4, 2, 2)
image_grad = pattern(8 * 8 * 3, 29, 97, 1000.0, -0.05).reshape(8, 8, 3)

alphas = [float(v) for v in np.linspace(0.9999, 0.0047, 11)]
write("info_response.json", {"protocol": 1, "latent_channels": 4, "latent_size": 2,
                             "model_id": "stable-diffusion-2-depth",
                             "schedule": {"alphas_cumprod": alphas}})

write("encode_request.json", {"image": tensor(image)})
write("encode_response.json", {"latent": tensor(latent)})

t = 0.25
prompt = "3D rendering of a house with a red roof and white walls, realistic, high-quality"
negative = "shadow, green shadow, blue shadow, purple shadow, yellow shadow"
write("predict_request.json", {"latent_noised": tensor(noised), "t": t, "depth": tensor(depth),
                               "prompt": prompt, "negative_prompt": negative})
write("predict_response.json", {"eps_cond": tensor(eps_cond), "eps_uncond": tensor(eps_uncond)})

write("encode_grad_request.json", {"latent_grad": tensor(latent_grad), "image": tensor(image)})
write("encode_grad_response.json", {"image_grad": tensor(image_grad)})

write("expected.json", {
    "inputs": {"image": np.asarray(image, dtype=np.float32).astype(np.float64).ravel().tolist(),
               "noised": noised.ravel().tolist(), "depth": depth.ravel().tolist(),
               "latent_grad": latent_grad.ravel().tolist(), "t": t,
               "prompt": prompt, "negative_prompt": negative},
    "latent": decoded(latent),
    "eps_cond": decoded(eps_cond),
    "eps_uncond": decoded(eps_uncond),
    "image_grad": decoded(image_grad),
    "noise_level_t": [0.0, 0.25, 0.5, 1.0],
    "noise_level_alpha": [float(np.sqrt(alphas[int(np.floor(x * 10 + 0.5))])) for x in [0.0, 0.25, 0.5, 1.0]],
    "noise_level_sigma": [float(np.sqrt(1 - alphas[int(np.floor(x * 10 + 0.5))])) for x in [0.0, 0.25, 0.5, 1.0]],
})
