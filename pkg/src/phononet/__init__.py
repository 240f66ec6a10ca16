"""phononet: spin-to-spin transfer and gates in phononic quantum networks."""
