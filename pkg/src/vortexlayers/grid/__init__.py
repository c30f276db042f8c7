from .core import (Box, Grid3, sample, derivative, gradient, divergence, curl,
                   biot_savart_spectral, direct_biot_savart, frac_laplacian,
                   spectral_eval, support_extent, check_padding, zero_pad, crop,
                   spectral_tail, require_resolved)
from .io import write_grid, read_grid
from .decay import DecayReport
