# include imports
from .haar_toolkit import HaarToolkit
from .run_config import RunConfig
