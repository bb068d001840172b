# Eryn Wells <eryn@erynwells.me>
