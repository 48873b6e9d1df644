import json
import os

from hamspace.bitcode import (
    CodeArray, HashCode, hamming_distance, perturbation_count, pigeonhole_threshold,
    projected_hamming_dissimilarity, split_substrings,
    )
from hamspace.codefile import codes_to_bytes


#######################
# Auxiliary functions #
#######################

def create_test_vector_file(vector, filename, generate_again=False):
    path = os.path.join(os.path.dirname(__file__), filename)

    mode = 'w' if generate_again else 'x'
    try:
        with open(path, mode) as f:
            json.dump(vector, f, indent=2)
    except FileExistsError:
        pass


# If True, this will overwrite existing test vector files
generate_again = False


##############################
# Distances between codes    #
##############################

pairs = [("10110100", "00111111"),
         ("1111000000000001", "0000000000000000"),
         ("11111111", "11111111"),
         ]

vectors = list()
for a_string, b_string in pairs:
    a, b = HashCode.from_string(a_string), HashCode.from_string(b_string)
    vectors.append({'a': a_string,
                    'b': b_string,
                    'a_bytes': bytes(a).hex(),
                    'b_bytes': bytes(b).hex(),
                    'hamming': hamming_distance(a, b),
                    'projected_ab': projected_hamming_dissimilarity(a, b),
                    'projected_ba': projected_hamming_dissimilarity(b, a),
                    })

vector_suite = {
    'name': 'Distances between hash codes',
    'description': 'Code strings list bit 0 first; bytes are the little-endian serialization',
    'vectors': vectors,
}

create_test_vector_file(vector_suite, 'vectors_bitcode.json', generate_again=generate_again)


#################################################
# Substrings and multi-index search bounds      #
#################################################

splits = [("10110100", 2), ("10110100", 4), ("1111000000000001", 2)]
radii = [(0, 4), (3, 4), (4, 4), (10, 4), (7, 2)]
perturbations = [(8, 1), (8, 2), (16, 2), (64, 1)]

vector_suite = {
    'name': 'Substrings and multi-index search bounds',
    'splits': [{'code': code, 'm': m,
                'values': [sub.value for sub in split_substrings(HashCode.from_string(code), m)]}
               for code, m in splits],
    'pigeonhole': [{'radius': r, 'm': m, 'threshold': pigeonhole_threshold(r, m)}
                   for r, m in radii],
    'perturbations': [{'length': length, 'radius': r, 'count': perturbation_count(length, r)}
                      for length, r in perturbations],
}

create_test_vector_file(vector_suite, 'vectors_substrings.json', generate_again=generate_again)


###########################
# Code file serialization #
###########################

codes = ["10110100", "00111111"]
data = codes_to_bytes(CodeArray.from_codes([HashCode.from_string(c) for c in codes]))

vector_suite = {
    'name': 'Code file serialization',
    'codes': codes,
    'file': data.hex(),
}

create_test_vector_file(vector_suite, 'vectors_code_file.json', generate_again=generate_again)
