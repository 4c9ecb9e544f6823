"""Generative distributed memory with exact Bayesian writes, least-squares
addressing, variational training, and attractor retrieval."""

from .attractor import EnergyTrace, TraceStep, iterate, predict, sample_prior
from .data import (Corpus, NoiseSpec, generate_synthetic, inject_noise,
                   load_corpus, parse_noise_spec, save_corpus,
                   synthetic_prototypes)
from .episodic import (AdamState, BoundReport, Episode, ReadStep, WriteResult,
                       bounds, prior_state, read_episode, train_step,
                       write_episode)
from .errors import (DimensionError, DomainError, FormatError,
                     NotPositiveDefinite, NumericalError)
from .experiments import (RunConfig, retrieval_error, run_capacity,
                          run_denoise, run_gradcheck, run_sample, train_loop)
from .memory import (AddressPosterior, MemoryState, address, kl_memory,
                     kl_weights, prior, read, update)
from .model import (Layer, LikelihoodEval, ModelParams, autoencoder_loglik,
                    decode_loglik, decode_mode, encode, energy, init_params)
from .persist import load_model, save_model
from .rng import PortableRng
from .tape import Node, Tape

__version__ = "0.1.0"
