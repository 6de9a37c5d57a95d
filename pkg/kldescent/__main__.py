import sys
from .main_ import cmd

sys.exit(cmd())
