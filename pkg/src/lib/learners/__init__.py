from .spec import *
from .model import *
from .stack import *
