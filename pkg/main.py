"""
main.py
-------
Entry point for the HCTN command line.

Usage
-----
# 1. Create and activate the virtual environment
python3 -m venv .venv
source .venv/bin/activate

# 2. Install dependencies
pip install -r requirements.txt

# 3. Run a subcommand
python main.py synth --dims 20 15 12 --out data/synth.txt --seed 7
python main.py train data/synth.txt --dims 20 15 12 --tau 4 --f2 16 --heads 2 --d-head 2 \
    --checkpoint runs/model.hctn --psi 0.3
python main.py evaluate data/synth.txt --dims 20 15 12 --checkpoint runs/model.hctn

Set HCTN_THREADS to cap BLAS / OpenMP threads.
"""
import sys

from hctn.ui.cli import main

if __name__ == '__main__':
    sys.exit(main())
