"""
balancedpy

Active linear regression with well-balanced sampling
"""

__version__ = "0.1.0"
__author__ = "balancedpy developers"
__credits__ = "balancedpy contributors"

from balancedpy.exceptions import *
from balancedpy.measure import *
from balancedpy.family import *
from balancedpy.erm import *
from balancedpy.procedure import *
from balancedpy.sampler_iid import *
from balancedpy.sampler_bss import *
from balancedpy.active import *
from balancedpy.sparseft import *
from balancedpy.experiment import *
