from .dataset import *
from .regime import *
from .schedule import *
from .schema import *
