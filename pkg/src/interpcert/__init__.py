"""Delta/gamma interpretability certificates for procedures that inform a target model."""
__version__ = "0.1.0"
