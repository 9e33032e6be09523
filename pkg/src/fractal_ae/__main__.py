import sys

from fractal_ae._cli import main

sys.exit(main())
