import torch

# keep linear algebra single-threaded: tiny models, and run-to-run
# bit-reproducibility should not depend on the host's core count
torch.set_num_threads(1)
