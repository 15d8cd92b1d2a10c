#pragma once

#include "tempo/dsl/ast.hpp"
#include "tempo/dsl/bundled.hpp"
#include "tempo/dsl/lexer.hpp"
#include "tempo/dsl/lower.hpp"
#include "tempo/dsl/parser.hpp"
