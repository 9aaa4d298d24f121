"""Random digraphs with minimum in/out-degree one: sampling, Hamilton cycles, exact oracles."""
