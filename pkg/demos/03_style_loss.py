"""Gram matrix style loss between two images, and its gradient."""

import numpy as np

from fluidstyle import Image
from fluidstyle.fixtures import dot_texture
from fluidstyle.style import StyleTarget, default_bank, feature_forward, style_loss_and_grad

bank = default_bank(0)
style = dot_texture(32, 4)
target = StyleTarget.from_image(style, bank)

for name, img in [("style itself", style), ("noise", Image(np.random.default_rng(1).uniform(0, 1, (32, 32))))]:
    loss, grad = style_loss_and_grad(img, bank, target)
    print(f"{name:12s} loss={loss:.3e} |grad|={np.linalg.norm(grad):.3e}")

for layer, f in feature_forward(style, bank).items():
    print("layer", layer, "features", f.shape)
