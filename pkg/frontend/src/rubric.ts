// Coder-facing rubric shown in the collapsible side panel. Keyboard digit
// shown next to each category matches the toggle shortcut.

import type { Category } from './types'

export interface RubricEntry {
  category: Category
  key: string
  title: string
  guidance: string[]
  example: string
}

export const RUBRIC: RubricEntry[] = [
  {
    category: 'process',
    key: '1',
    title: 'Processing information',
    guidance: [
      'Reading or re-reading the problem statement, a hint, or feedback.',
      'Restating given information while making sense of it.',
    ],
    example: '"Okay, it says we start with 32 grams and want moles..."',
  },
  {
    category: 'plan',
    key: '2',
    title: 'Planning',
    guidance: [
      'Stating a conceptual goal or a plan for how to solve the problem.',
      'Plans involve the chemistry, not just which box to fill next.',
    ],
    example: '"We need the molar mass first, then we can convert."',
  },
  {
    category: 'act',
    key: '3',
    title: 'Enacting',
    guidance: [
      'Announcing the concrete next action in the tutor interface.',
      'Narrating an action that was just carried out.',
    ],
    example: '"I\'ll type 18 in the denominator... there."',
  },
  {
    category: 'error',
    key: '4',
    title: 'Realizing errors',
    guidance: [
      'Noticing that something is wrong, whether from feedback or on their own.',
    ],
    example: '"Hmm, that came back red, so the units must be off."',
  },
]
