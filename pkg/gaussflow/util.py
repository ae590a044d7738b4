import hashlib
import json
import os
import random
import sys
from datetime import datetime

import numpy as np


def basename(directory):
    if len(os.path.basename(directory)) == 0:
        directory = os.path.dirname(directory)
    return os.path.basename(directory)


def fix_seed(seed):
    if seed == -1:
        seed = random.randint(0, 2 ** 32 - 1)
        print(f'Using random seed {seed}')
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    return seed


def create_output_dir(dir, config=None):
    timestamp = datetime.now().strftime("%Y_%m_%d_%H_%M_%S")
    output_dir = f'{dir}_{timestamp}'
    suffix = 1
    while os.path.exists(output_dir): # two runs within the same second
        output_dir = f'{dir}_{timestamp}_{suffix}'
        suffix += 1
    os.makedirs(output_dir)
    if config is not None:
        config = dict(config)
        config['timestamp'] = timestamp
        with open(os.path.join(output_dir, 'config.json'), 'w') as cfg:
            json.dump(config, cfg, indent=4, cls=PatchedJSONEncoder)
    return output_dir


def file_digest(filepath):
    with open(filepath, 'rb') as f:
        return hashlib.sha256(f.read()).hexdigest()


def thread_count():
    try:
        return max(1, int(os.environ.get('GAUSSFLOW_THREADS', 1)))
    except ValueError:
        return 1


class Logger(object):
    """Tee for stdout, everything printed also ends up in the given logfile."""

    def __init__(self, fname='logfile.txt'):
        self.terminal = sys.stdout
        self.log = open(fname, 'a')

    def write(self, message):
        self.terminal.write(message)
        self.log.write(message)

    def flush(self):
        self.terminal.flush()
        self.log.flush()

    def close(self):
        self.log.close()


class PatchedJSONEncoder(json.JSONEncoder):

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if hasattr(obj, 'to_dict'):
            return obj.to_dict()
        return super().default(obj)
