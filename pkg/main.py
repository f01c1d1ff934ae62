#!/usr/bin/env python3
"""
TDPT Imaging - Main Entry Point

Runs an experiment stage from the working directory without installing the
package. Equivalent to the `tdpt` console script.

    python main.py pipeline --figure 4
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from tdpt.cli import main

if __name__ == "__main__":
    sys.exit(main())
