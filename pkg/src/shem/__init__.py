"""Smart-home energy management: neural-surrogate MPC expert, adversarial imitation, baselines."""

__version__ = "0.1.0"
