"""
ke-toolkit entry point.

Allows running the repository as a module:
python -m <repository directory>
"""

from src.main import run

if __name__ == '__main__':
    run()
