# Eryn Wells <eryn@erynwells.me>

'''Main module'''

from .cli import run_until_exit

run_until_exit()
