__version__ = "0.1.0"

from . import errors
from . import utils
from . import config
from . import taxonomy
from . import subgraph
from . import descriptions
from . import selector
from . import backends
from . import pruning
from . import evaluation
