"""Model-free control: ultra-local models, intelligent PID and algebraic differentiation."""

__version__ = "0.1.0"
