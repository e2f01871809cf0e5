''' Tests. '''
from .t_model import *
from .t_lp import *
from .t_policies import *
from .t_simulator import *
from .t_analysis import *
from .t_oracle import *
from .t_instances import *
from .t_api import *
from .t_cli import *
from .t_experiments import *
