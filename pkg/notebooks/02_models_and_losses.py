# # Generator, discriminator and the self-consistency losses
#
# The generator maps a noisy patch to its noise map. The discriminator judges
# whether noisy - G(noisy) looks like a clean patch. Three extra losses pin
# down what a good noise extractor must satisfy on its own outputs.

# In[1]:

import torch

from scgan.losses import (adversarial_losses, generator_terms, reconstruction_consistency_loss)
from scgan.models import (PAPER_GENERATOR, Discriminator, Generator, GeneratorConfig,
                          count_parameters, discriminator_output_size)

# Reflection padding equal to the depth makes every valid 3x3 conv stack
# shape-preserving.

# In[2]:

for depth in (3, 5, 7, 17):
    G = Generator(GeneratorConfig(depth=depth, mid_channels=8))
    print(depth, tuple(G(torch.rand(1, 1, 32, 32)).shape))
print("full-size generator parameters:", count_parameters(Generator(PAPER_GENERATOR)))

# The discriminator shrinks its input with four valid convolutions.

# In[3]:

for n in (29, 64, 128):
    print(n, "->", discriminator_output_size(n))
try:
    discriminator_output_size(8)
except ValueError as err:
    print(err)

# ## Loss sanity checks
#
# Least-squares targets: real scores aim for 1, fake for 0, and the generator
# wants its fakes scored 1.

# In[4]:

l_d, l_g = adversarial_losses(torch.full((3, 3), 0.8), torch.full((3, 3), 0.3))
print(round(l_d.item(), 6), round(l_g.item(), 6))

# A generator that returns zeros satisfies all three consistency losses; an
# identity generator pays mean(J_c^2) on the clean and reconstruction terms.


class Fixed(torch.nn.Module):
    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def forward(self, x):
        return self.fn(x)


# In[5]:

noisy, clean = torch.rand(2, 1, 32, 32), torch.rand(2, 1, 32, 32)
D = Discriminator()
for name, G in (("zero", Fixed(torch.zeros_like)), ("identity", Fixed(lambda x: x))):
    terms = generator_terms(G, D, noisy, clean)
    print(name, {k: round(v.item(), 5) for k, v in terms.items() if k != "l_gan_g"})
print("mean(J_c^2) =", round((clean ** 2).mean().item(), 5))
print(reconstruction_consistency_loss(torch.tensor(1.5), torch.tensor(1.0)).item())
