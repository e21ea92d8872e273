import os
import subprocess
import sys
from dotenv import load_dotenv
from pathlib import Path

# Load .env file
env_file = Path(__file__).parent / ".env"
if env_file.exists():
    load_dotenv(env_file)
    print(f"Loaded .env file from: {env_file}", file=sys.stderr)

# Set PYTHONPATH
os.environ['PYTHONPATH'] = str(Path(__file__).parent / 'src')

# Forward the arguments to the CLI
command = [sys.executable, str(Path(__file__).parent / 'src' / 'main.py'), *sys.argv[1:]]
sys.exit(subprocess.run(command).returncode)
