import os
import argparse
import json
from datetime import datetime, timedelta
import shutil
import tarfile

from gaussflow.util import basename, PatchedJSONEncoder


def read_metrics(filepath):
    if not os.path.isfile(filepath):
        return None
    with open(filepath, 'r') as logf:
        return json.load(logf)


def aggregate_results(directory):
    res = {'directory_name': basename(directory)}
    try:
        with open(os.path.join(directory, 'config.json'), 'r') as cf:
            res['config'] = json.load(cf)
        res['execution_platform'] = read_metrics(os.path.join(directory, 'execution_platform.json'))
        res['report'] = read_metrics(os.path.join(directory, 'report.json'))
        if res['report'] is None: # run was interrupted before writing its report
            res['duration'] = (datetime.now() - datetime.strptime(res["config"]["timestamp"], "%Y_%m_%d_%H_%M_%S")).total_seconds()
        else:
            res['duration'] = res['report']['timings']['total']
    except Exception as e:
        res['Error'] = str(e)
    return res


def process_directory(directory, output_log_dir=None, output_agglog_dir=None):
    # create summary
    print('Processing', directory)
    if output_agglog_dir is not None and len(output_agglog_dir) > 0 and os.path.isdir(output_agglog_dir):
        agglog_name = os.path.join(output_agglog_dir, basename(directory) + '.json')
        if os.path.isfile(agglog_name):
            print('WARNING!', agglog_name, 'already exists, so will not create new!')
            with open(agglog_name, 'r') as agglog:
                res = json.load(agglog)
        else:
            res = aggregate_results(directory)
            if output_log_dir is not None and len(output_log_dir) > 0 and os.path.isdir(output_log_dir):
                res['log_directory'] = os.path.join(output_log_dir, basename(directory) + '.tar.gz')
            with open(agglog_name, 'w') as agglog:
                json.dump(res, agglog, indent=4, cls=PatchedJSONEncoder)
    else:
        res = aggregate_results(directory)
    # create tar
    if output_log_dir is not None and os.path.isdir(output_log_dir):
        log_tar_name = os.path.join(output_log_dir, basename(directory) + '.tar.gz')
        if not os.path.exists(log_tar_name):
            with tarfile.open(log_tar_name, 'w:gz') as tar:
                for fname in os.listdir(directory):
                    tar.add(os.path.join(directory, fname))
        else:
            print('WARNING!', log_tar_name, 'already exists, so will not create new!')
    return res


def process_all_subdirectories(directory, output_log_dir=None, output_agglog_dir=None):
    """Every subdirectory is one run folder as created by run.py, named <command>_<timestamp>."""
    results = {}
    for dir in sorted(os.listdir(directory)):
        path = os.path.join(directory, dir)
        if os.path.isdir(path):
            results[dir] = process_directory(path, output_log_dir, output_agglog_dir)
    return results


def summarize(results):
    summary = {}
    for dir, res in results.items():
        if 'Error' in res or res['report'] is None:
            summary[dir] = {'status': 'error' if 'Error' in res else 'incomplete'}
            continue
        report = res['report']
        summary[dir] = {
            'command': report['command'],
            'seed': report['config']['seed'],
            'status': 'passed' if report['passed'] else ('errored' if report['error'] else 'failed'),
            'verdicts': len(report['verdicts']),
            'failed': [verdict['check'] for verdict in report['verdicts'] if not verdict['passed']],
            'duration': res['duration'],
        }
    return summary


def print_results(summary):
    if len(summary) < 1:
        return
    print('\n\nRUNS\n\n              Directory               -     Command     -    Seed    -  Status  - Verdicts -   Duration   - Failed checks')
    for dir, values in summary.items():
        if 'command' not in values:
            print(f'{dir:<38} - {values["status"].upper()}')
            continue
        duration = str(timedelta(seconds=int(values["duration"])))
        failed = ', '.join(values['failed']) if values['failed'] else '-'
        print(f'{dir:<38} - {values["command"]:<15} - {values["seed"]:>10} - {values["status"]:<8} - {values["verdicts"]:>8} - {duration:>12} - {failed}')


def main(directory, output_log_dir=None, output_agglog_dir=None, output_summary=None, clean=False):
    if clean:
        for rootdir in [output_log_dir, output_agglog_dir]:
            if rootdir and os.path.isdir(rootdir):
                for subdir in os.listdir(rootdir):
                    if os.path.isfile(os.path.join(rootdir, subdir)):
                        os.remove(os.path.join(rootdir, subdir))
                    else:
                        shutil.rmtree(os.path.join(rootdir, subdir))
    results = process_all_subdirectories(directory, output_log_dir, output_agglog_dir)
    summary = summarize(results)
    print_results(summary)
    if output_summary:
        with open(output_summary, 'w') as sf:
            json.dump(summary, sf, indent=4)
    return summary


if __name__ == '__main__':

    parser = argparse.ArgumentParser()

    parser.add_argument("--directory", default="results", type=str, help="directory with run folders")
    parser.add_argument("--output-log-dir", default="", type=str, help="directory where the run folders shall be archived (.tar.gz archives)")
    parser.add_argument("--output-agglog-dir", default="", type=str, help="directory where per-run aggregates (json format) are created")
    parser.add_argument("--output-summary", default="", type=str, help="json file for the merged summary table")
    parser.add_argument("--clean", action='store_true', help="set to first delete all content in given output directories")

    args = parser.parse_args()
    main(args.directory, args.output_log_dir, args.output_agglog_dir, args.output_summary, args.clean)
