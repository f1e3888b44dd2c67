"""notilab: a lab for the delivery-notification timing side channel."""

__version__ = "0.1.0"
