# runner.py

from hopper_stiffness.cli import app

if __name__ == "__main__":
    app()
