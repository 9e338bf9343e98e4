"""Single-server shortest-job-first-with-aging queues and their fluid limits.

Subpackages split along the pipeline: `aging` (priority trajectories and
the prime-plane transform), `measures` (finite measures, Levy metric,
plane transport), `skorokhod` (scalar and measure-valued reflection),
`fluid` (deterministic limit surfaces), `simulator` (pre-limit event
simulation and convergence harness), `oracles` (closed-form examples),
`service`/`cli` (HTTP front end and its thin client).
"""

__version__ = "0.1.0"
