"""Locally orderless registration: scale-aware density estimation,
histogram similarity measures with analytic gradients, and a quasi-Newton
registration loop."""

from .grid import ImageGrid, load_image, save_image, load_pgm, save_pgm
from .bspline import InterpolantCoefficients, prefilter, sample
from .kernels import (KernelSpec, ScaleTriple, kernel_eval, convolve, smooth,
                      gaussian_kernel, parzen_gaussian, bspline_kernel,
                      boxcar_kernel, bspline_equivalent_std)
from .synth import gaussian_blob, linear_gradient, ramp, smooth_random_field
from .histograms import (LocalHistogram, JointHistogram, MomentSet,
                         counting_histogram, local_histogram, parzen_marginal,
                         pw_joint, gpv_joint, normalize, moments, soft_isophote)
from .measures import (MeasureSpec, MeasureValue, HistogramGradient, entropy,
                       evaluate, evaluate_cr, gradient_wrt_histogram)
from .transforms import Translation, Rigid, BSplineFFD, make_transform
from .objective import Objective, ObjectiveConfig
from .optimize import minimize_lbfgs, OptimizationTrace
from .registration import register, RegistrationResult, save_result
from .estimator import LocallyOrderlessRegistration
from .flops import FlopModel

__version__ = "0.1.0"
