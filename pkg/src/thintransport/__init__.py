"""Parallel transport, holonomy and transition cocycles for principal bundles
over chart atlases, with thin-homotopy certificates and reconstruction of
connections from transport data.

Submodules: ``exprdsl``, ``liegroup``, ``geometry``, ``pathalg``,
``transport``, ``torsor``, ``reconstruct``, ``cocycle``, ``config`` and ``cli``.
"""

__version__ = "0.1.0"
